"""Touch-stroke continuous authentication.

End-to-end tooling for modeling smartphone swipe behaviour: raw stroke
ingestion and cleaning, 76 behavioural features with five published feature
sets, per-user one-vs-rest classifiers (kNN, RBF-SVM, random forest,
extra-trees, gradient boosting) selected by cross-validated grid search with
a one-standard-deviation complexity rule, and evaluation of bidirectional vs
omnidirectional modeling through moving-average stroke fusion, AUC/EER, and
Wilcoxon significance tests.
"""

__version__ = "0.1.0"
