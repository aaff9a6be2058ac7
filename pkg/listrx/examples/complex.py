"""
Running listrx with measurement costs, bootstrap inference, and scoring.

Measuring x3 and x4 is expensive in this example (see data/costs.csv), so the
minimal-cost rewrite prefers lists that reach a recommendation without them
whenever the recommendations on the sample stay the same.

The value of the fitted list is optimistic because the list was chosen to
maximize it. The weighted bootstrap refits everything under random exponential
subject weights to estimate and remove that optimism, and gives a prediction
interval.

Finally, the fitted regime is applied to new subjects, reporting which
covariates each one actually needed.
"""
import os

import numpy as np

from listrx import RegimeLearner, CostModel, load_csv
from listrx.regime import needed_covariates

HERE = os.path.dirname(os.path.realpath(__file__))
DATA = os.path.join(HERE, "data", "example.csv")
COSTS = os.path.join(HERE, "data", "costs.csv")


def run(n_bootstraps=50, seed=2):
    """
    Fit with costs, bootstrap the value, and score a few new subjects.

    Args:
        n_bootstraps (int): Bootstrap replicates.
        seed (int): Run seed.

    Returns:
        (RegimeFit, ValueReport, list) The fit, its value report and the
            (recommendation, needed covariates) of each new subject.
    """
    data = load_csv(DATA, treatment_col="a", outcome_col="y")
    costs = CostModel.from_file(COSTS, data.covariate_names)
    learner = RegimeLearner(seed=seed, alpha=0.1, n_bootstraps=n_bootstraps,
                            cv_folds=5)
    fit = learner.fit(data, costs=costs)
    report = learner.evaluate(fit)

    new = np.array([[0.2, -1.0, 0.0, 3.0],
                    [-0.5, 1.5, 1.0, 8.0],
                    [1.3, 0.4, -2.0, 1.0]])
    rec = fit.regime.recommend(new)
    needed = needed_covariates(fit.regime, new)
    scored = [(data.treatment_labels[a],
               sorted(data.covariate_names[j] for j in s))
              for a, s in zip(rec, needed)]
    return fit, report, scored


if __name__ == "__main__":
    fit, report, scored = run()
    print(fit.text())
    print("Value {:.3f}, bias-corrected {:.3f}, 95% interval [{:.3f}, {:.3f}]"
          "".format(report.value, report.corrected, *report.interval))
    for label, names in scored:
        print("recommend {} (measured: {})".format(label,
                                                   ", ".join(names) or "none"))
