"""
An example of the most basic listrx usage.
This file fits a decision-list regime to the bundled example data.

The data hold 200 subjects with four covariates, a treatment column "a" with
levels T and C, and a continuous outcome "y" where higher is better.

The fit runs in four steps, all inside RegimeLearner.fit:
    1. The propensity and outcome models are fit (multinomial logistic
        regression and a LASSO outcome model chosen by cross-validation).
    2. Doubly robust pseudo-outcomes give the estimated value of any regime.
    3. A greedy search grows the decision list one clause at a time while the
        value gain clears a variance gate.
    4. The list is rewritten into the equivalent list that is cheapest to
        apply.

--------------------------------------------------------------------------
The complex example shows cost files, bootstrap inference and scoring new
subjects.
"""
import os

from listrx import RegimeLearner, load_csv

DATA = os.path.join(os.path.dirname(os.path.realpath(__file__)), "data",
                    "example.csv")


def fit_example(**kwargs):
    """
    Fit the bundled example with default settings.

    Args:
        **kwargs: RegimeLearner configuration overrides.

    Returns:
        (RegimeFit) The fit.
    """
    data = load_csv(DATA, treatment_col="a", outcome_col="y")
    learner = RegimeLearner(**kwargs)
    return learner.fit(data)


if __name__ == "__main__":
    learner = RegimeLearner(seed=1)
    data = load_csv(DATA, treatment_col="a", outcome_col="y")
    fit = learner.fit(data)

    # Examine results
    print(fit.text())
    print(learner.summarize(fit))
