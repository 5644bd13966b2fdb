import pytest
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import BertConfig, BertModel, BertTokenizerFast

# WordPiece inventory chosen so the tests control subword splits:
# "apple" is one piece, "banana" is two, "bananas" is three.
PIECES = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "apple", "ban", "##ana", "##s", "orange", "kiwi", "pear", "juice",
    "fresh", "ripe", "the", "a", "i", "we", "ate", "like", "press",
    "apfel", "birne", "saft", "jabuka", "sok", "frisch",
]


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A tiny randomly initialized BERT-architecture checkpoint saved
    to disk, so every test exercises the real load-from-path route."""
    backend = Tokenizer(models.WordPiece(
        {piece: index for index, piece in enumerate(PIECES)},
        unk_token="[UNK]"))
    backend.normalizer = normalizers.BertNormalizer(lowercase=True)
    backend.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    backend.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]", pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", PIECES.index("[CLS]")),
                        ("[SEP]", PIECES.index("[SEP]"))])
    tokenizer = BertTokenizerFast(tokenizer_object=backend,
                                  unk_token="[UNK]", pad_token="[PAD]",
                                  cls_token="[CLS]", sep_token="[SEP]",
                                  mask_token="[MASK]")
    config = BertConfig(vocab_size=len(PIECES), hidden_size=32,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=64, max_position_embeddings=260)
    torch.manual_seed(0)
    model = BertModel(config)
    target = tmp_path_factory.mktemp("checkpoint") / "tiny-multilingual"
    model.save_pretrained(target)
    tokenizer.save_pretrained(target)
    return str(target)
