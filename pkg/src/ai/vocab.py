"""
Joint subword vocabulary shared by every language and both encoders.
"""
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import json
import logging

from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.pre_tokenizers import WhitespaceSplit
from tokenizers.trainers import WordPieceTrainer

from ..exceptions import ConfigurationError

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SEP = "<sep>"
SPECIALS = [PAD, BOS, EOS, UNK]
CONTINUATION = "##"


class Vocabulary:
    """WordPiece vocabulary with atomic special, separator and LangId tokens.

    Words are encoded one at a time so every subword keeps the index of the
    word it came from; word-level tags are broadcast to subwords with it.
    """

    def __init__(self, tokenizer: Tokenizer, lang_ids: Sequence[str], sep: str = SEP):
        self.tokenizer = tokenizer
        self.lang_ids = list(lang_ids)
        self.sep = sep
        self.logger = logging.getLogger(self.__class__.__name__)
        self.specials = SPECIALS + [sep] + self.lang_ids
        self._atomic: Dict[str, int] = {}
        for token in self.specials:
            token_id = tokenizer.token_to_id(token)
            if token_id is None:
                raise ConfigurationError(f"Special token {token!r} missing from the vocabulary")
            self._atomic[token] = token_id
        self._cache: Dict[str, Tuple[int, ...]] = {}

    @classmethod
    def train(cls, sentences: Iterable[Sequence[str]], lang_ids: Sequence[str],
              vocab_size: int = 8000, sep: str = SEP, min_frequency: int = 1) -> 'Vocabulary':
        """Train a joint vocabulary on tokenized sentences of all languages."""
        specials = SPECIALS + [sep] + list(lang_ids)
        tokenizer = Tokenizer(WordPiece(unk_token=UNK, continuing_subword_prefix=CONTINUATION))
        tokenizer.pre_tokenizer = WhitespaceSplit()
        trainer = WordPieceTrainer(
            vocab_size=vocab_size,
            min_frequency=min_frequency,
            special_tokens=specials,
            continuing_subword_prefix=CONTINUATION,
            show_progress=False,
        )
        specials_set = set(specials)
        tokenizer.train_from_iterator(
            (" ".join(w for w in sentence if w not in specials_set) for sentence in sentences),
            trainer=trainer,
        )
        return cls(tokenizer, lang_ids, sep)

    def __len__(self) -> int:
        return self.tokenizer.get_vocab_size()

    @property
    def pad_id(self) -> int:
        return self._atomic[PAD]

    @property
    def bos_id(self) -> int:
        return self._atomic[BOS]

    @property
    def eos_id(self) -> int:
        return self._atomic[EOS]

    @property
    def unk_id(self) -> int:
        return self._atomic[UNK]

    @property
    def sep_id(self) -> int:
        return self._atomic[self.sep]

    def lang_id(self, code: str) -> int:
        if code not in self.lang_ids:
            raise ConfigurationError(f"Unknown LangId: {code}")
        return self._atomic[code]

    @property
    def lang_id_ids(self) -> List[int]:
        return [self._atomic[code] for code in self.lang_ids]

    def encode_word(self, word: str) -> Tuple[int, ...]:
        if word in self._atomic:
            return (self._atomic[word],)
        if word not in self._cache:
            ids = tuple(self.tokenizer.encode(word, add_special_tokens=False).ids)
            self._cache[word] = ids or (self.unk_id,)
        return self._cache[word]

    def encode(self, words: Sequence[str]) -> Tuple[List[int], List[int]]:
        """Encode words into subword ids.

        Returns:
            Tuple of (ids, index of the source word for every id)
        """
        ids: List[int] = []
        word_index: List[int] = []
        for position, word in enumerate(words):
            pieces = self.encode_word(word)
            ids.extend(pieces)
            word_index.extend([position] * len(pieces))
        return ids, word_index

    def decode(self, ids: Iterable[int]) -> Tuple[str, ...]:
        """Join subwords back into words; stops at end-of-sequence."""
        words: List[str] = []
        for token_id in ids:
            token_id = int(token_id)
            if token_id == self.eos_id:
                break
            if token_id in (self.pad_id, self.bos_id):
                continue
            token = self.tokenizer.id_to_token(token_id)
            if token is None:
                continue
            if token.startswith(CONTINUATION) and words:
                words[-1] += token[len(CONTINUATION):]
            else:
                words.append(token)
        return tuple(words)

    def to_json(self) -> str:
        return json.dumps({
            "tokenizer": json.loads(self.tokenizer.to_str()),
            "lang_ids": self.lang_ids,
            "sep": self.sep,
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, payload: str) -> 'Vocabulary':
        data = json.loads(payload)
        tokenizer = Tokenizer.from_str(json.dumps(data["tokenizer"]))
        return cls(tokenizer, data["lang_ids"], data.get("sep", SEP))
