"""Regenerates credit_risk.csv: 200 synthetic loan applicants, 11 numeric features.

Deterministic (seed 7). Labels come from a hidden logistic rule plus noise,
label 1 = loan approved.
"""
import numpy as np

rng = np.random.default_rng(7)
n = 200

age = rng.integers(21, 71, n).astype(float)
emp_length = np.clip(np.round(rng.gamma(2.0, 3.0, n)), 0, np.minimum(age - 18, 30))
cred_hist = np.clip(np.round((age - 18) * rng.uniform(0.2, 0.9, n)), 2, 30)
income = np.round(np.clip(rng.lognormal(11.0, 0.5, n), 12000, 250000), -2)
loan_amnt = np.round(np.clip(rng.lognormal(9.0, 0.6, n), 1000, 35000), -2)
loan_pct = np.round(np.clip(loan_amnt / income, 0.01, 0.65), 2)
int_rate = np.round(np.clip(rng.normal(11.0, 3.2, n), 5.42, 23.22), 2)
credit_lines = rng.integers(1, 26, n).astype(float)
dti = np.round(np.clip(rng.beta(2.0, 6.0, n) * 0.8, 0.0, 0.6), 3)
savings = np.round(np.clip(rng.exponential(9000.0, n), 0, 60000), -1)
prior_defaults = rng.choice([0, 0, 0, 0, 1, 1, 2, 3], n).astype(float)

def z(v):
    return (v - v.mean()) / v.std()

logit = (
    0.2
    + 1.1 * z(np.log(income))
    + 0.6 * z(emp_length)
    + 0.7 * z(cred_hist)
    - 1.0 * z(int_rate)
    - 1.2 * z(loan_pct)
    - 0.3 * z(loan_amnt)
    + 0.1 * z(credit_lines)
    - 0.8 * z(dti)
    + 0.6 * z(savings)
    - 0.9 * z(prior_defaults)
    + 0.05 * z(age)
    + rng.normal(0.0, 0.7, n)
)
label = (logit > 0).astype(int)

cols = [
    ("person_age", age, "{:.0f}"),
    ("person_income", income, "{:.0f}"),
    ("person_emp_length", emp_length, "{:.0f}"),
    ("cb_person_cred_hist_length", cred_hist, "{:.0f}"),
    ("loan_int_rate", int_rate, "{:.2f}"),
    ("loan_percent_income", loan_pct, "{:.2f}"),
    ("loan_amnt", loan_amnt, "{:.0f}"),
    ("open_credit_lines", credit_lines, "{:.0f}"),
    ("debt_to_income", dti, "{:.3f}"),
    ("savings_balance", savings, "{:.0f}"),
    ("prior_defaults", prior_defaults, "{:.0f}"),
]

with open("credit_risk.csv", "w") as f:
    f.write("id," + ",".join(c[0] for c in cols) + ",label\n")
    for i in range(n):
        cells = [fmt.format(v[i]) for _, v, fmt in cols]
        f.write(f"a{i:03d}," + ",".join(cells) + f",{label[i]}\n")
