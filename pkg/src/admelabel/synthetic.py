"""Synthetic pharmacokinetics paragraphs for offline experiments.

Labeled paragraphs come in five classes. About half of them contain an
explicit class sentence built from shared frames and class-specific phrase
lexicons ("anchors"); every paragraph also mentions terms from a per-class
term lexicon inside class-neutral frames, plus neutral filler. In paragraphs
without an anchor the rare terms are the only class evidence, so a keyword
rule and a bag-of-words model trained on a few thousand paragraphs see each
term only a handful of times.

The unlabeled corpus (for masked-LM pretraining) mostly holds short
reference texts: a cue word naming the class followed by several terms of
that class. A model that learns to fill in masked terms there has learned
which class each term belongs to, which is exactly what fine-tuning on the
small labeled set needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .annotator import LabeledParagraph, Topic

# Default class shares: the sizes of a regex-annotated label corpus.
DEFAULT_CLASS_COUNTS = {Topic.ABSORPTION: 1955, Topic.DISTRIBUTION: 1213, Topic.METABOLISM: 1137,
                 Topic.EXCRETION: 1472, Topic.OTHER: 5232}

_SYLLABLES = ("lo", "ver", "za", "ri", "mo", "cla", "ben", "tor", "pa", "xi", "fe", "do", "ra", "me", "sa",
              "ti", "no", "ca", "de", "lu", "pre", "ena", "ami", "bi", "cele", "fu", "gra", "ho", "ki", "vo")
_STEMS = ("pril", "sartan", "olol", "statin", "azole", "tinib", "mab", "vir", "floxacin", "cycline", "zepam",
          "dipine", "gliptin", "parin", "triptan", "profen", "setron", "prazole", "dafil", "lukast", "tidine",
          "zosin", "semide", "formin", "oxetine", "peridone", "barbital", "caine", "nidazole", "platin")
_METAB_PREFIX = ("desmethyl", "hydroxy", "nor", "oxo", "dehydro", "carboxy", "didesmethyl", "dihydro",
                 "deacetyl", "epoxy")
_CYP = ("3a4", "2d6", "2c9", "2c19", "1a2", "2b6", "2c8", "3a5", "2e1")
_UGT = ("1a1", "1a9", "2b7", "1a4", "2b15")
_PARTNERS = ("ketoconazole", "itraconazole", "rifampin", "carbamazepine", "digoxin", "warfarin", "midazolam",
             "metformin", "omeprazole", "rosuvastatin", "clarithromycin", "fluconazole", "phenytoin",
             "cyclosporine", "gemfibrozil", "quinidine", "ritonavir", "efavirenz", "famotidine", "probenecid")

_VP = {
    Topic.ABSORPTION: (
        "is rapidly absorbed after oral administration",
        "is well absorbed from the gastrointestinal tract",
        "reaches peak plasma concentrations within {h} hours",
        "has an absolute bioavailability of approximately {pct}%",
        "attains maximum concentrations {h} hours after dosing",
        "shows dose-proportional increases in Cmax over the {dose} to {dose2} mg range",
        "is slowly taken up from the subcutaneous injection site",
        "enters the systemic circulation through the nasal mucosa",
        "is absorbed through the buccal mucosa when given sublingually",
        "has a median Tmax of {h} hours",
        "exhibits saturable uptake across the intestinal epithelium",
        "dissolves in the stomach and is taken up mainly in the duodenum",
        "shows a {pct}% lower Cmax when taken with a high-fat meal",
        "had its rate of uptake delayed by food without a change in extent",
        "is poorly permeable across the gut wall",
        "appeared in plasma after a lag time of {h} hours",
        "yields similar exposure from the tablet and the oral suspension",
        "was bioequivalent between the capsule and tablet formulations",
        "was taken up more slowly from the extended-release formulation",
        "is subject to presystemic loss in the gut wall",
        "permeates the skin slowly when applied as a transdermal patch",
        "is delivered to the bloodstream within minutes of inhalation",
        "has oral availability that rises by {pct}% in the fed state",
        "crosses the intestinal wall by passive diffusion",
        "shows greater uptake when the granules are sprinkled on applesauce",
        "reached Cmax sooner under fasting conditions",
        "is absorbed to a similar extent from the rectal suppository",
        "shows complete uptake from the intramuscular depot",
    ),
    Topic.DISTRIBUTION: (
        "is approximately {pct}% bound to plasma proteins",
        "has an apparent volume of distribution of {num} L/kg",
        "binds primarily to albumin and alpha-1-acid glycoprotein",
        "crosses the blood-brain barrier",
        "crosses the placenta in pregnant rats",
        "is present in human breast milk",
        "distributes extensively into peripheral tissues",
        "penetrates into cerebrospinal fluid",
        "partitions into red blood cells",
        "accumulates in adipose tissue with repeated dosing",
        "reaches high levels in the lungs and kidneys",
        "passes into the aqueous humor of the eye",
        "reaches synovial fluid levels close to those in plasma",
        "is largely confined to the extracellular space",
        "shows a blood-to-plasma ratio of {num}",
        "is highly bound to serum proteins over the therapeutic range",
        "concentrates in the liver, spleen and bone marrow",
        "is dispersed throughout total body water",
        "enters the central nervous system poorly",
        "has a steady-state volume of {num} liters",
        "is sequestered in skeletal muscle",
        "has an unbound fraction of {pct}%",
        "reaches the fetal circulation at low levels",
        "is retained in melanin-containing tissues",
        "shows a milk-to-plasma ratio of {num}",
        "binds reversibly to lipoproteins",
        "shows tissue-to-plasma ratios above {num} in most organs",
        "is taken up into platelets and leukocytes",
    ),
    Topic.METABOLISM: (
        "is extensively metabolized in the liver",
        "is primarily metabolized by CYP{cyp}",
        "undergoes hepatic biotransformation to {metab}",
        "is converted to the active metabolite {metab}",
        "is oxidized by cytochrome P450 isoenzymes, mainly CYP{cyp}",
        "undergoes glucuronidation by UGT{ugt}",
        "is a substrate of CYP{cyp} and CYP{cyp2}",
        "is hydrolyzed by plasma esterases to {metab}",
        "forms {metab} as the major circulating species",
        "is N-demethylated to {metab}",
        "undergoes sulfation and acetylation",
        "is conjugated with glucuronic acid before excretion",
        "is not a substrate of cytochrome P450 isoenzymes",
        "is reduced by carbonyl reductases to {metab}",
        "undergoes oxidative deamination by monoamine oxidase",
        "has a pharmacologically inactive derivative, {metab}",
        "is biotransformed by aldehyde oxidase",
        "shows higher exposure in poor metabolizers of CYP{cyp}",
        "is deacetylated to {metab} in the intestine",
        "is hydroxylated at the {pos} position by CYP{cyp}",
        "yields {metab} and {metab2} as its principal products",
        "is cleaved by amidases to {metab}",
        "is transformed by flavin monooxygenase 3 to {metab}",
        "undergoes stereoselective oxidation of the R-enantiomer",
        "is metabolized by CYP{cyp} to {metab}, which retains {pct}% of the activity",
        "forms a reactive quinone intermediate that is trapped by glutathione",
    ),
    Topic.EXCRETION: (
        "is excreted in the urine, mainly as metabolites",
        "is eliminated primarily by the kidneys",
        "has a terminal half-life of {h} hours",
        "is recovered in feces as unchanged drug",
        "undergoes renal tubular secretion",
        "is cleared by glomerular filtration",
        "is secreted into the bile",
        "has a total body clearance of {num} mL/min",
        "leaves the body with a mean half-life of {h} hours",
        "showed {pct}% of the radiolabeled dose recovered in urine",
        "is eliminated unchanged via biliary excretion",
        "has a renal clearance that approximates creatinine clearance",
        "undergoes enterohepatic recirculation",
        "shows a biphasic decline with a long terminal phase",
        "is cleared from plasma within {num} days",
        "appears in the urine within {h} hours of dosing",
        "is mainly removed through the fecal route",
        "shows a half-life that is independent of dose",
        "washes out over {num} days after the last dose",
        "is exhaled as carbon dioxide to a minor extent",
        "has a mean residence time of {h} hours",
        "is recovered mostly in urine within {num} days",
        "has an apparent oral clearance of {num} L/h",
        "is secreted by the renal organic anion transporters",
        "showed a urinary recovery of {pct}% as unchanged drug",
    ),
    Topic.OTHER: (
        "showed increased exposure when coadministered with {partner}",
        "had a {pct}% higher AUC in patients with moderate hepatic impairment",
        "requires no dose adjustment in patients with mild renal impairment",
        "showed no clinically meaningful differences based on age, sex or race",
        "did not prolong the QTc interval at {num} times the therapeutic dose",
        "had similar pharmacokinetics in pediatric patients aged {num} to {num2} years",
        "showed {pct}% higher exposure in elderly subjects",
        "did not alter the pharmacokinetics of {partner}",
        "increased {partner} AUC by {pct}%",
        "had exposure that was unaffected by body weight",
        "showed reduced clearance in patients with end-stage renal disease",
        "had prolonged elimination in patients with severe renal impairment",
        "had exposure in Japanese subjects similar to that in Caucasians",
        "inhibited P-glycoprotein in vitro",
        "is not expected to alter drugs metabolized by CYP{cyp}",
        "did not induce CYP{cyp} in cultured human hepatocytes",
        "produced a dose-dependent decrease in heart rate",
        "was associated with reductions in systolic blood pressure",
        "showed no effect of smoking on exposure",
        "caused no change in the absorption of oral contraceptives",
        "had exposures in pregnant women similar to nonpregnant women",
        "showed lower plasma levels with concomitant {partner}",
        "produced receptor occupancy of {pct}% at steady state",
        "had a {pct}% decrease in AUC when given with {partner}",
        "was removed by hemodialysis to a limited extent",
        "showed no gender effect on Cmax",
        "had higher trough levels in patients with cirrhosis",
        "did not interact with antacids",
        "inhibited platelet aggregation within {h} hours",
        "showed population exposure consistent with adults",
        "should be avoided with strong inducers such as {partner}",
        "showed no food effect on the QT interval",
    ),
}

_NP = {
    Topic.ABSORPTION: ("absolute bioavailability", "peak plasma concentration", "time to maximum concentration",
                       "oral bioavailability", "rate of uptake", "fraction absorbed", "relative bioavailability",
                       "median Tmax", "lag time"),
    Topic.DISTRIBUTION: ("volume of distribution", "plasma protein binding", "unbound fraction",
                         "blood-to-plasma ratio", "steady-state volume", "CSF-to-plasma ratio",
                         "milk-to-plasma ratio", "tissue binding"),
    Topic.METABOLISM: ("major metabolite", "metabolite-to-parent ratio", "hepatic intrinsic clearance",
                       "CYP{cyp} contribution", "fraction metabolized", "glucuronide formation rate"),
    Topic.EXCRETION: ("terminal half-life", "renal clearance", "total body clearance", "urinary recovery",
                      "fecal recovery", "mean residence time", "elimination rate constant", "biliary clearance"),
    Topic.OTHER: ("AUC ratio with {partner}", "exposure in hepatic impairment", "QTc change", "pediatric exposure",
                  "effect of age", "receptor occupancy", "exposure in renal impairment", "trough concentration"),
}

_FRAMES_VP = (
    "{Drug} {vp}.",
    "After a single {dose} mg oral dose, {drug} {vp}.",
    "In healthy subjects, {drug} {vp}.",
    "Studies showed that {drug} {vp}.",
    "Following multiple doses, {drug} {vp}.",
    "At clinical doses, {drug} {vp}.",
    "In adult patients, {drug} {vp}.",
    "Data indicate that {drug} {vp}.",
)
_FRAMES_NP = (
    "The mean {np} of {drug} was {num} after a {dose} mg dose.",
    "The {np} of {drug} was similar across studies.",
    "Values for the {np} of {drug} ranged from {num} to {num2}.",
)
_NEUTRAL = (
    "The pharmacokinetics of {drug} were evaluated in {n} healthy subjects.",
    "Results are expressed as mean values.",
    "Values were similar in all subjects.",
    "These results were evaluated in {n} subjects.",
    "The results were consistent across studies.",
)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the generator. Class shares default to ``DEFAULT_CLASS_COUNTS``.

    ``anchor_rate`` is the chance that a labeled paragraph contains explicit
    class sentences. Every labeled paragraph also names ``term_sentences``
    sentences' worth of terms from its class lexicon (``terms_per_class``
    entries, drawn with Zipf exponent ``zipf_exponent``; 0 is uniform) inside
    class-neutral frames, so in most paragraphs rare terms are the only class
    evidence. The unlabeled corpus additionally carries reference sentences
    that relate each term to its class (``reference_rate`` of its texts).
    """

    class_sentences: tuple[int, int] = (1, 2)
    neutral_sentences: tuple[int, int] = (0, 1)
    np_frame_rate: float = 0.25
    anchor_rate: float = 0.5
    term_sentences: tuple[int, int] = (1, 1)
    terms_per_class: int = 300
    zipf_exponent: float = 0.0
    lexicon_seed: int = 7
    reference_rate: float = 0.8
    reference_sentences: tuple[int, int] = (1, 1)


_TERM_ENDINGS = ("ase", "in", "ol", "ide", "ate", "one", "ine", "ium", "ene", "yl")
_TERM_FRAMES = (
    "Levels of {term} were measured.",
    "Levels of {term} and {term2} were measured in all subjects.",
    "The {term} response to {drug} was measured.",
    "Changes in {term} were similar in all subjects.",
    "Both {term} and {term2} were evaluated.",
)

# Index entries in the reference texts: a cue word followed by terms of its class.
_CUES = {
    Topic.ABSORPTION: "absorption",
    Topic.DISTRIBUTION: "distribution",
    Topic.METABOLISM: "metabolism",
    Topic.EXCRETION: "excretion",
    Topic.OTHER: "safety",
}
_REFERENCE_TERMS = (4, 6)


@lru_cache(maxsize=8)
def term_lexicon(terms_per_class: int, seed: int = 7) -> dict[Topic, tuple[str, ...]]:
    """Disjoint per-class lists of pseudo-terms, most frequent first.

    All classes draw from the same syllables and endings, so a term's spelling
    says nothing about its class.
    """
    rng = np.random.default_rng(seed)
    need = terms_per_class * len(Topic)
    seen: set[str] = set()
    terms: list[str] = []
    while len(terms) < need:
        w = "".join(rng.choice(_SYLLABLES, size=int(rng.integers(2, 4)))) + str(rng.choice(_TERM_ENDINGS))
        if w not in seen:
            seen.add(w)
            terms.append(w)
    return {t: tuple(terms[i * terms_per_class:(i + 1) * terms_per_class]) for i, t in enumerate(sorted(Topic))}


@lru_cache(maxsize=8)
def _zipf(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** exponent
    return w / w.sum()


def _drug(rng) -> str:
    n = int(rng.integers(1, 3))
    return "".join(rng.choice(_SYLLABLES, size=n)) + str(rng.choice(_STEMS))


def _fill(template: str, rng, drug: str) -> str:
    vals = {
        "drug": drug,
        "Drug": drug.capitalize(),
        "h": f"{rng.choice([0.5, 1, 1.5, 2, 2.5, 3, 4, 6, 8, 12, 24, 36, 48])}",
        "pct": str(int(rng.integers(5, 99))),
        "num": f"{rng.uniform(0.1, 60):.1f}",
        "num2": f"{rng.uniform(60, 200):.0f}",
        "n": str(int(rng.integers(8, 60))),
        "t": str(int(rng.integers(1, 9))),
        "dose": str(int(rng.choice([5, 10, 20, 25, 40, 50, 100, 200, 400]))),
        "dose2": str(int(rng.choice([500, 600, 800, 1000]))),
        "cyp": str(rng.choice(_CYP)).upper(),
        "cyp2": str(rng.choice(_CYP)).upper(),
        "ugt": str(rng.choice(_UGT)).upper(),
        "partner": str(rng.choice(_PARTNERS)),
        "metab": str(rng.choice(_METAB_PREFIX)) + drug,
        "metab2": str(rng.choice(_METAB_PREFIX)) + drug,
        "pos": f"{int(rng.integers(2, 12))}-",
    }
    return template.format(**vals)


def _class_sentence(topic: Topic, rng, drug: str, cfg: SyntheticConfig) -> str:
    if rng.random() < cfg.np_frame_rate:
        frame = str(rng.choice(_FRAMES_NP))
        return _fill(frame.replace("{np}", str(rng.choice(_NP[topic]))), rng, drug)
    frame = str(rng.choice(_FRAMES_VP))
    return _fill(frame.replace("{vp}", str(rng.choice(_VP[topic]))), rng, drug)


def _terms(topic: Topic, rng, cfg: SyntheticConfig) -> tuple[str, str]:
    lex = term_lexicon(cfg.terms_per_class, cfg.lexicon_seed)[topic]
    a, b = rng.choice(len(lex), size=2, p=_zipf(len(lex), cfg.zipf_exponent))
    return lex[a], lex[b]


def _capitalize(text: str) -> str:
    return text[0].upper() + text[1:]


def _term_sentence(topic: Topic, rng, drug: str, cfg: SyntheticConfig) -> str:
    a, b = _terms(topic, rng, cfg)
    frame = str(rng.choice(_TERM_FRAMES))
    return _capitalize(frame.format(term=a, term2=b, drug=drug, Drug=drug.capitalize()))


def _reference_sentence(topic: Topic, rng, cfg: SyntheticConfig) -> str:
    lex = term_lexicon(cfg.terms_per_class, cfg.lexicon_seed)[topic]
    k = int(rng.integers(_REFERENCE_TERMS[0], _REFERENCE_TERMS[1] + 1))
    words = [lex[i] for i in rng.choice(len(lex), size=k, replace=False, p=_zipf(len(lex), cfg.zipf_exponent))]
    return " ".join([_CUES[topic], *words])


def generate_paragraph(topic: Topic, rng: np.random.Generator, cfg: SyntheticConfig = SyntheticConfig()) -> str:
    drug = _drug(rng)
    sentences = []
    if rng.random() < cfg.anchor_rate:
        k = int(rng.integers(cfg.class_sentences[0], cfg.class_sentences[1] + 1))
        sentences = [_class_sentence(topic, rng, drug, cfg) for _ in range(k)]
    k = int(rng.integers(cfg.term_sentences[0], cfg.term_sentences[1] + 1))
    m = int(rng.integers(cfg.neutral_sentences[0], cfg.neutral_sentences[1] + 1))
    extra = [_term_sentence(topic, rng, drug, cfg) for _ in range(k)]
    extra += [_fill(str(rng.choice(_NEUTRAL)), rng, drug) for _ in range(m)]
    for f in extra:
        sentences.insert(int(rng.integers(0, len(sentences) + 1)), f)
    return " ".join(sentences)


def class_counts(n: int, weights: dict[Topic, int] | None = None) -> dict[Topic, int]:
    """Split ``n`` paragraphs across topics in proportion to ``weights`` (largest remainder)."""
    weights = weights or DEFAULT_CLASS_COUNTS
    total = sum(weights.values())
    raw = {t: n * w / total for t, w in weights.items()}
    counts = {t: int(np.floor(v)) for t, v in raw.items()}
    for t in sorted(raw, key=lambda t: (counts[t] - raw[t], int(t)))[: n - sum(counts.values())]:
        counts[t] += 1
    return counts


def generate_corpus(n: int = 2500, seed: int = 0, cfg: SyntheticConfig = SyntheticConfig(),
                    weights: dict[Topic, int] | None = None) -> list[LabeledParagraph]:
    """``n`` labeled paragraphs with class shares from ``weights``, shuffled by ``seed``."""
    rng = np.random.default_rng(seed)
    topics = [t for t, c in sorted(class_counts(n, weights).items()) for _ in range(c)]
    topics = [topics[i] for i in rng.permutation(len(topics))]
    return [LabeledParagraph(generate_paragraph(t, rng, cfg), t, "manual", id=f"syn-{seed}-{i:05d}")
            for i, t in enumerate(topics)]


def generate_reference_text(topic: Topic, rng: np.random.Generator, cfg: SyntheticConfig = SyntheticConfig()) -> str:
    """A few sentences relating terms of ``topic`` to each other and to its cue phrases."""
    k = int(rng.integers(cfg.reference_sentences[0], cfg.reference_sentences[1] + 1))
    return " ".join(_reference_sentence(topic, rng, cfg) for _ in range(k))


def generate_unlabeled(n: int, seed: int = 0, cfg: SyntheticConfig = SyntheticConfig()) -> list[str]:
    """Raw texts for masked-LM pretraining.

    A ``reference_rate`` share are reference texts (topics uniform, so every
    term is covered); the rest are paragraphs like the labeled ones.
    """
    rng = np.random.default_rng(seed)
    topics = sorted(Topic)
    out = []
    for _ in range(n):
        topic = topics[int(rng.integers(len(topics)))]
        if rng.random() < cfg.reference_rate:
            out.append(generate_reference_text(topic, rng, cfg))
        else:
            out.append(generate_paragraph(topic, rng, cfg))
    return out
