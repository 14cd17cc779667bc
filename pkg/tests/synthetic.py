"""Deterministic synthetic Devanagari corpus for tests.

Sentences are drawn from a seeded first-order Markov chain over a fixed
word inventory, so the text carries learnable sequential structure (a
trained model can beat the unigram baseline) while staying fully
reproducible. The text is original and synthetic.
"""

from __future__ import annotations

import numpy as np

from indiclm.corpus import RawDocument

WORDS = [
    "राम", "सीता", "गाँव", "नदी", "पहाड़", "जंगल", "आकाश", "धरती", "सूरज", "चाँद",
    "तारा", "बादल", "वर्षा", "हवा", "अग्नि", "जल", "वृक्ष", "फूल", "फल", "पत्ता",
    "पक्षी", "मोर", "कोयल", "हिरण", "हाथी", "घोड़ा", "गाय", "बकरी", "शेर", "बाघ",
    "मनुष्य", "बालक", "बालिका", "माता", "पिता", "भाई", "बहन", "मित्र", "गुरु", "शिष्य",
    "राजा", "रानी", "मंत्री", "सैनिक", "किसान", "कुम्हार", "लोहार", "व्यापारी", "कवि", "लेखक",
    "पुस्तक", "विद्यालय", "मंदिर", "बाज़ार", "रास्ता", "द्वार", "घर", "आँगन", "छत", "दीपक",
    "सुबह", "दोपहर", "शाम", "रात", "वर्ष", "मास", "दिवस", "क्षण", "समय", "युग",
    "आनंद", "शांति", "प्रेम", "क्रोध", "भय", "साहस", "धैर्य", "karunā", "विद्या", "बुद्धि",
    "जाता", "आता", "खाता", "पीता", "सोता", "उठता", "चलता", "दौड़ता", "पढ़ता", "लिखता",
    "गाता", "नाचता", "हँसता", "रोता", "देखता", "सुनता", "कहता", "सोचता", "करता", "बनाता",
    "में", "पर", "से", "को", "का", "की", "के", "और", "तथा", "परंतु",
    "यह", "वह", "हम", "तुम", "आप", "कोई", "सब", "बहुत", "थोड़ा", "सदा",
]
# drop the stray romanization so the corpus stays single-script
WORDS = [w for w in WORDS if w.isascii() is False]


def _transition_matrix(n_words: int, seed: int, branch: int = 5) -> np.ndarray:
    """Sparse row-stochastic transitions: each word favors a few successors."""
    rng = np.random.default_rng(seed)
    probs = np.zeros((n_words, n_words))
    for i in range(n_words):
        successors = rng.choice(n_words, size=branch, replace=False)
        weights = rng.dirichlet(np.ones(branch) * 0.6)
        probs[i, successors] = weights
    return probs


def generate_sentence(rng, probs, start_dist, min_len=5, max_len=13) -> str:
    length = int(rng.integers(min_len, max_len + 1))
    word = int(rng.choice(len(WORDS), p=start_dist))
    words = [WORDS[word]]
    for _ in range(length - 1):
        word = int(rng.choice(len(WORDS), p=probs[word]))
        words.append(WORDS[word])
    return " ".join(words) + "।"


def generate_corpus_text(n_bytes: int, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    probs = _transition_matrix(len(WORDS), seed=seed + 1)
    start = rng.dirichlet(np.ones(len(WORDS)) * 0.4)
    chunks: list[str] = []
    total = 0
    while total < n_bytes:
        sentence = generate_sentence(rng, probs, start)
        chunks.append(sentence)
        total += len(sentence.encode("utf-8")) + 1
    return " ".join(chunks)


def generate_documents(n_docs: int, sentences_per_doc: int = 12, seed: int = 0) -> list[RawDocument]:
    rng = np.random.default_rng(seed)
    probs = _transition_matrix(len(WORDS), seed=seed + 1)
    start = rng.dirichlet(np.ones(len(WORDS)) * 0.4)
    docs = []
    for d in range(n_docs):
        sentences = [generate_sentence(rng, probs, start) for _ in range(sentences_per_doc)]
        docs.append(RawDocument(f"doc-{d:05d}", "hi", "Devanagari", " ".join(sentences)))
    return docs


DEVANAGARI_FIXTURE = (
    "सुबह की पहली किरण गाँव के मंदिर पर गिरती है और पक्षियों का गीत आरंभ होता है। "
    "नदी के किनारे किसान अपने खेतों की ओर चलते हैं और बैल धीरे धीरे हल खींचते हैं। "
    "बालक विद्यालय की राह पर हँसते हुए दौड़ते हैं और गुरु द्वार पर उनकी प्रतीक्षा करते हैं। "
    "दोपहर में बाज़ार की गलियाँ व्यापारियों की पुकार से गूँज उठती हैं। "
    "कुम्हार चाक पर नये घड़े गढ़ता है और लोहार भट्टी में लोहे को आकार देता है। "
    "शाम होते ही दीपक जलते हैं और आँगन में कथा कहने वाले बूढ़े एकत्र होते हैं। "
    "रात के आकाश में तारे चमकते हैं और चाँद नदी के जल में झिलमिलाता है। "
    "वर्षा के दिनों में बादल पहाड़ों से उतरकर जंगल को भिगो देते हैं। "
    "मोर वर्षा में नाचता है और कोयल आम की डाली पर गाती है। "
    "इस प्रकार गाँव का जीवन ऋतुओं के साथ घूमता रहता है और हर दिवस एक नयी कथा लाता है।"
)
