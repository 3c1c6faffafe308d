"""Keyword rules and TF-IDF classifiers on the synthetic corpus, with 5-fold CV.

    python demos/baselines.py
"""

from __future__ import annotations

from pathlib import Path

from admelabel.annotator import import_manual
from admelabel.baseline_rules import RuleClassifier, default_keyword_table, matched_topics
from admelabel.eval_harness import run_cv, stratified_kfold
from admelabel.synthetic import generate_corpus
from admelabel.tfidf_linear import TfidfClassifier

corpus = generate_corpus(1500, seed=0)
plan = stratified_kfold(corpus, 5, seed=0)

# The keyword rule fires on the stem, not on meaning.
for text in ("The drug is rapidly absorbed after oral dosing.",
             "The drug passes into the aqueous humor of the eye.",
             "Food delays absorption; renal elimination is minor."):
    print(f"{RuleClassifier().predict([text])[0].name:12s} {[t.name for t in matched_topics(text, default_keyword_table())]}  {text}")
print()


def tfidf(kind):
    return lambda train, val: TfidfClassifier(kind).fit([p.text for p in train], [p.topic for p in train])


trainers = {"rule": lambda train, val: RuleClassifier(seed=0), "logreg": tfidf("logreg"), "svm": tfidf("svm"),
            "forest": tfidf("forest")}
for name, trainer in trainers.items():
    report = run_cv(trainer, corpus, plan).to_dict()
    f1 = report["aggregate"]["f1"]
    print(f"{name:7s} macro-F1 {f1['mean']:.3f} +- {f1['std']:.3f}")

manual = import_manual(Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "manual_paroxetine.jsonl")
print("\nhand-labeled paroxetine rows, rule predictions:")
for p, pred in zip(manual, RuleClassifier().predict([p.text for p in manual])):
    print(f"  gold {p.topic.name:12s} predicted {pred.name}")
