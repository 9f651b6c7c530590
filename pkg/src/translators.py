"""
External translators used to build synthetic triplets and augmentation data.
"""
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple
import hashlib
import logging
import shlex
import subprocess

import requests
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from .corpus import LangId, Tokens, tokenize
from .exceptions import TranslatorError

Direction = Tuple[LangId, LangId]


class ExternalTranslator(ABC):
    """Translates token sequences between declared language directions."""

    def __init__(self, directions: Iterable[Direction], max_workers: int = 4):
        self.directions: Set[Direction] = set(directions)
        self.max_workers = max_workers
        self.logger = logging.getLogger(self.__class__.__name__)

    def supports(self, source_lang: LangId, target_lang: LangId) -> bool:
        return (source_lang, target_lang) in self.directions

    @abstractmethod
    def translate(self, sentence: Sequence[str], source_lang: LangId, target_lang: LangId) -> Tokens:
        """Translate one tokenized sentence.

        Raises:
            TranslatorError: If the sentence cannot be translated
        """
        pass

    def _translate_or_none(self, item: Tuple[Sequence[str], LangId, LangId]) -> Optional[Tokens]:
        sentence, source_lang, target_lang = item
        try:
            result = self.translate(sentence, source_lang, target_lang)
        except TranslatorError as e:
            self.logger.warning(f"Translation failed ({source_lang}->{target_lang}): {str(e)}")
            return None
        return result or None

    def translate_batch(self, items: Sequence[Tuple[Sequence[str], LangId, LangId]]) -> List[Optional[Tokens]]:
        """Translate many sentences; failures come back as None.

        Results are in input order regardless of completion order.
        """
        if self.max_workers <= 1 or len(items) <= 1:
            return [self._translate_or_none(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return list(pool.map(self._translate_or_none, items))


class CipherTranslator(ExternalTranslator):
    """Seeded token-substitution translator between toy languages.

    Tokens found in the direction's lexicon are replaced by their entry;
    other tokens are mapped to a stable pseudo-word derived from the seed.
    Sentences containing a token from ``fail_on`` raise TranslatorError.
    """

    def __init__(self, directions: Iterable[Direction], seed: int = 17,
                 lexicons: Optional[Mapping[Direction, Mapping[str, str]]] = None,
                 fail_on: Iterable[str] = (), max_workers: int = 1):
        super().__init__(directions, max_workers=max_workers)
        self.seed = seed
        self.lexicons: Dict[Direction, Dict[str, str]] = {
            direction: dict(lexicon) for direction, lexicon in (lexicons or {}).items()
        }
        self.fail_on = set(fail_on)

    def _cipher(self, token: str, direction: Direction) -> str:
        digest = hashlib.blake2b(
            f"{self.seed}|{direction[0]}|{direction[1]}|{token}".encode("utf-8"), digest_size=4
        ).hexdigest()
        return f"{direction[1][:2]}{digest}"

    def translate(self, sentence: Sequence[str], source_lang: LangId, target_lang: LangId) -> Tokens:
        direction = (source_lang, target_lang)
        if direction not in self.directions:
            raise TranslatorError(f"Unsupported direction {source_lang}->{target_lang}")
        if self.fail_on.intersection(sentence):
            raise TranslatorError(f"Cannot translate: {' '.join(sentence)}")
        lexicon = self.lexicons.get(direction, {})
        return tuple(lexicon.get(token) or self._cipher(token, direction) for token in sentence)


class IdentityTranslator(ExternalTranslator):
    """Returns the source unchanged."""

    def translate(self, sentence: Sequence[str], source_lang: LangId, target_lang: LangId) -> Tokens:
        if not self.supports(source_lang, target_lang):
            raise TranslatorError(f"Unsupported direction {source_lang}->{target_lang}")
        return tuple(sentence)


class CommandTranslator(ExternalTranslator):
    """Runs an external command per sentence.

    The command receives the text on stdin and the two LangId codes as its
    last arguments, and prints the translation on stdout.
    """

    def __init__(self, command: str, directions: Iterable[Direction], timeout: float = 60.0,
                 max_workers: int = 4, attempts: int = 3):
        super().__init__(directions, max_workers=max_workers)
        self.command = shlex.split(command)
        self.timeout = timeout
        self.attempts = attempts

    def _run(self, text: str, source_lang: LangId, target_lang: LangId) -> str:
        @retry(stop=stop_after_attempt(self.attempts),
               wait=wait_exponential(multiplier=0.5, max=4),
               retry=retry_if_exception_type(subprocess.SubprocessError),
               reraise=True)
        def call() -> str:
            completed = subprocess.run(
                self.command + [source_lang, target_lang],
                input=text, capture_output=True, text=True, timeout=self.timeout, check=True,
            )
            return completed.stdout

        try:
            return call()
        except (subprocess.SubprocessError, OSError) as e:
            raise TranslatorError(f"Translator command failed: {str(e)}")

    def translate(self, sentence: Sequence[str], source_lang: LangId, target_lang: LangId) -> Tokens:
        if not self.supports(source_lang, target_lang):
            raise TranslatorError(f"Unsupported direction {source_lang}->{target_lang}")
        output = self._run(" ".join(sentence), source_lang, target_lang)
        tokens = tokenize(output.strip().splitlines()[0] if output.strip() else "")
        if not tokens:
            raise TranslatorError("Translator command returned an empty translation")
        return tokens


class HttpTranslator(ExternalTranslator):
    """Posts ``{text, from, to}`` to a translation endpoint."""

    def __init__(self, url: str, directions: Iterable[Direction], timeout: float = 30.0,
                 max_workers: int = 4, attempts: int = 3, headers: Optional[Dict[str, str]] = None):
        super().__init__(directions, max_workers=max_workers)
        self.url = url
        self.timeout = timeout
        self.attempts = attempts
        self.headers = {'Content-Type': 'application/json', **(headers or {})}
        self._session = None

    @property
    def session(self):
        """Get or create a session."""
        if self._session is None:
            self._session = requests.Session()
        return self._session

    def _post(self, payload: Dict[str, str]) -> Dict:
        @retry(stop=stop_after_attempt(self.attempts),
               wait=wait_exponential(multiplier=0.5, max=4),
               retry=retry_if_exception_type((requests.exceptions.ConnectionError,
                                              requests.exceptions.Timeout)),
               reraise=True)
        def call() -> Dict:
            response = self.session.post(self.url, json=payload, headers=self.headers,
                                         timeout=self.timeout)
            response.raise_for_status()
            return response.json()

        try:
            return call()
        except requests.exceptions.RequestException as e:
            raise TranslatorError(f"Translation request failed: {str(e)}")
        except ValueError as e:
            raise TranslatorError(f"Translation response is not JSON: {str(e)}")

    def translate(self, sentence: Sequence[str], source_lang: LangId, target_lang: LangId) -> Tokens:
        if not self.supports(source_lang, target_lang):
            raise TranslatorError(f"Unsupported direction {source_lang}->{target_lang}")
        data = self._post({'text': " ".join(sentence), 'from': source_lang, 'to': target_lang})
        translation = data.get('translation') if isinstance(data, dict) else None
        if not translation:
            raise TranslatorError(f"No translation in response: {data}")
        return tokenize(translation)


def translator_from_settings(settings, directions: Iterable[Direction], seed: int = 17) -> ExternalTranslator:
    """Pick the configured translator, falling back to the toy cipher."""
    directions = list(directions)
    if settings.translator_url:
        return HttpTranslator(settings.translator_url, directions)
    if settings.translator_command:
        return CommandTranslator(settings.translator_command, directions)
    return CipherTranslator(directions, seed=seed)
