import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

from attncite_extractor import HFRunner

DOC_WORDS = (
    "the patient reports a dry cough and mild fever since last night . "
    "pain in right eye is red . chest x-ray shows small consolidation . "
    "plan rest fluids and follow up soon . summarize document above in few "
    "sentences describe image one short an"
).split()


def build_tokenizer(extra=("<img>",)):
    words = sorted(set(DOC_WORDS)) + list(extra) + ["[UNK]", "[EOS]"]
    vocab = {w: i for i, w in enumerate(words)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="[UNK]", eos_token="[EOS]", pad_token="[EOS]"
    )


def build_model(vocab_size: int, seed: int = 0):
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=vocab_size,
        n_layer=2,
        n_head=2,
        n_embd=32,
        n_positions=256,
        bos_token_id=vocab_size - 1,
        eos_token_id=vocab_size - 1,
        attn_implementation="eager",
    )
    model = GPT2LMHeadModel(config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def runner():
    tokenizer = build_tokenizer()
    model = build_model(tokenizer.vocab_size, seed=7)
    return HFRunner(model, tokenizer, image_token="<img>", n_image_tokens=4)


@pytest.fixture()
def doc_text():
    return (
        "The patient reports a dry cough and mild fever since last night . "
        "Pain in right eye is red . Chest x-ray shows small consolidation . "
        "Plan rest fluids and follow up soon ."
    )
