"""Classifiers and the repeated stratified cross-validation harness.

Two classifiers are provided: a linear (degree-1 polynomial kernel) SVM
trained one-vs-one by dual coordinate descent, and a multinomial logistic
model with a lasso penalty fit by cyclic coordinate descent along a
regularization path.  Tracks are scored by majority vote over their
segments' predicted labels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .features import fit_pca, standardize

log = logging.getLogger(__name__)

NUM_FOLDS = 3
SEGMENTS_PER_TRACK = 15


# ---------------------------------------------------------------------------
# linear SVM, one-vs-one, dual coordinate descent


def _dual_cd_linear(X: np.ndarray, y: np.ndarray, c_per_sample: float,
                    tol: float, rng: np.random.Generator,
                    max_epochs: int = 1000) -> np.ndarray:
    """L1-hinge linear SVM dual solver; returns the augmented weight vector.

    Minimizes 0.5*||w||^2 + c * sum_i hinge(y_i w.x_i) over w (bias folded in
    as a trailing all-ones feature), iterating coordinates of the box dual in
    a freshly shuffled order each epoch until the duality gap falls under
    `tol * max(1, primal)`.
    """
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qdiag = np.einsum("ij,ij->i", X, X)
    upper = c_per_sample
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            g = y[i] * (w @ X[i]) - 1.0
            a = alpha[i]
            pg = min(g, 0.0) if a <= 0.0 else (max(g, 0.0) if a >= upper else g)
            if pg == 0.0:
                continue
            a_new = min(max(a - g / qdiag[i], 0.0), upper)
            if a_new != a:
                w += (a_new - a) * y[i] * X[i]
                alpha[i] = a_new
        margins = 1.0 - y * (X @ w)
        primal = 0.5 * (w @ w) + c_per_sample * np.sum(np.maximum(margins, 0.0))
        dual = np.sum(alpha) - 0.5 * (w @ w)
        if primal - dual <= tol * max(1.0, abs(primal)):
            return w
    log.warning("svm dual solver hit max_epochs with gap %.3g", primal - dual)
    return w


@dataclass
class SvmModel:
    """One-vs-one linear SVM: one augmented weight vector per class pair.

    The bias is carried as an extra column scaled to the training features'
    RMS, so rescaling all features (with C adjusted by the inverse square)
    rescales the whole augmented problem and leaves decisions unchanged.
    """

    classes: np.ndarray
    pairs: list
    weights: np.ndarray  # (num_pairs, d + 1)
    C: float
    bias_scale: float = 1.0

    def _pair_decisions(self, X: np.ndarray) -> np.ndarray:
        Xa = np.column_stack([X, np.full(X.shape[0], self.bias_scale)])
        return Xa @ self.weights.T

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        """Per-class sums of signed pairwise decision values, shape (n, C)."""
        dec = self._pair_decisions(X)
        scores = np.zeros((X.shape[0], len(self.classes)))
        for p, (a, b) in enumerate(self.pairs):
            scores[:, a] += dec[:, p]
            scores[:, b] -= dec[:, p]
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        dec = self._pair_decisions(X)
        votes = np.zeros((X.shape[0], len(self.classes)))
        scores = np.zeros_like(votes)
        for p, (a, b) in enumerate(self.pairs):
            win_a = dec[:, p] > 0
            votes[win_a, a] += 1
            votes[~win_a, b] += 1
            scores[:, a] += dec[:, p]
            scores[:, b] -= dec[:, p]
        # ties on votes break on summed margins, then on class order
        pred = np.argmax(votes, axis=1)
        tied = (votes == votes.max(axis=1, keepdims=True)).sum(axis=1) > 1
        for i in np.flatnonzero(tied):
            cand = np.flatnonzero(votes[i] == votes[i].max())
            pred[i] = cand[np.argmax(scores[i, cand])]
        return self.classes[pred]


def svm_train(X: np.ndarray, y, C: float = 1.0, *, tol: float = 1e-4,
              seed: int = 0, max_epochs: int = 1000) -> SvmModel:
    """Train one-vs-one linear SVMs to duality-gap tolerance `tol`.

    The loss is mean-normalized (c = C/n per pair), so duplicating every
    training point leaves the decision functions unchanged.  Deterministic
    for fixed seed and data order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ConfigError("svm_train expects X (n, d) and y (n,)")
    if not np.all(np.isfinite(X)):
        raise NumericError("svm_train input contains non-finite values")
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")
    classes = np.unique(y)
    if classes.size < 2:
        raise ConfigError("svm_train needs at least two classes")

    rng = np.random.default_rng(seed)
    rms = float(np.sqrt(np.mean(X ** 2)))
    bias_scale = rms if rms > 0 else 1.0
    Xa = np.column_stack([X, np.full(X.shape[0], bias_scale)])
    pairs, weights = [], []
    for a in range(classes.size):
        for b in range(a + 1, classes.size):
            mask = (y == classes[a]) | (y == classes[b])
            ya = np.where(y[mask] == classes[a], 1.0, -1.0)
            sub = np.ascontiguousarray(Xa[mask])
            w = _dual_cd_linear(sub, ya, C / sub.shape[0], tol, rng,
                                max_epochs=max_epochs)
            pairs.append((a, b))
            weights.append(w)
    return SvmModel(classes=classes, pairs=pairs, weights=np.array(weights), C=C,
                    bias_scale=bias_scale)


# ---------------------------------------------------------------------------
# multinomial lasso logistic regression, cyclic coordinate descent


def soft_threshold(value: float, threshold: float) -> float:
    """S(z, t) = sign(z) * max(|z| - t, 0), the lasso coordinate shrinkage."""
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def _softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _mean_nll(F: np.ndarray, Y: np.ndarray) -> float:
    Z = F - F.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    return float(-np.sum(Y * logp) / F.shape[0])


def _kkt_violation(G: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """Worst violation of the lasso stationarity conditions.

    G is the smooth-loss gradient d(mean NLL)/d(theta); zero coefficients
    need |G| <= lam, active ones G = -lam * sign(theta).
    """
    active = theta != 0
    viol_zero = np.maximum(np.abs(G) - lam, 0.0)
    viol_zero[active] = 0.0
    viol_active = np.abs(G + lam * np.sign(theta))
    viol_active[~active] = 0.0
    return float(max(viol_zero.max(initial=0.0), viol_active.max(initial=0.0)))


def lasso_cd_quadratic(X: np.ndarray, z: np.ndarray, lam: float, *,
                       weight: float = 1.0, max_passes: int = 1000,
                       tol: float = 1e-12) -> np.ndarray:
    """Cyclic coordinate descent for weighted-square-loss lasso.

    Minimizes (weight/(2n)) * ||z - X theta||^2 + lam * ||theta||_1 with no
    intercept; the workhorse update behind each quadratic approximation of
    the logistic fit, exposed for direct verification.
    """
    n, d = X.shape
    theta = np.zeros(d)
    resid = z.astype(np.float64).copy()
    col_v = weight * np.einsum("ij,ij->j", X, X) / n
    for _ in range(max_passes):
        delta = 0.0
        for j in range(d):
            if col_v[j] == 0.0:
                continue
            rho = weight * (X[:, j] @ resid) / n + col_v[j] * theta[j]
            new = soft_threshold(rho, lam) / col_v[j]
            if new != theta[j]:
                resid -= (new - theta[j]) * X[:, j]
                delta = max(delta, abs(new - theta[j]))
                theta[j] = new
        if delta <= tol:
            break
    return theta


def _fit_multinomial_path(Xs, Y, lambdas, tol, max_sweeps, theta0=None, b0=None):
    """Warm-started path fit on standardized columns.

    Each sweep re-linearizes one class at a time with the uniform curvature
    bound 1/4 (a majorizer of the softmax loss), runs one cyclic pass of
    soft-threshold updates over the working set, and refreshes the working
    set from the exact-gradient KKT conditions until they hold within `tol`.
    Returns (thetas, intercepts) along the path.
    """
    n, d = Xs.shape
    ncls = Y.shape[1]
    col_norm2 = np.einsum("ij,ij->j", Xs, Xs)
    usable = col_norm2 > 0
    v = 0.25 * col_norm2 / n  # curvature-bound denominator per column

    priors = Y.mean(axis=0)
    b = np.log(np.maximum(priors, 1e-12))
    b -= b.mean()
    if b0 is not None:
        b = b0.copy()
    theta = np.zeros((ncls, d)) if theta0 is None else theta0.copy()
    F = np.tile(b, (n, 1)) + Xs @ theta.T

    thetas, intercepts = [], []
    for lam in lambdas:
        work = [np.flatnonzero((theta[c] != 0) & usable) for c in range(ncls)]
        for sweep in range(max_sweeps):
            for c in range(ncls):
                p = _softmax(F)[:, c]
                z = F[:, c] + 4.0 * (Y[:, c] - p)  # bound-quadratic working response
                e = z - F[:, c]                     # residual z - b_c - X theta_c
                tc = theta[c]
                for j in work[c]:
                    rho = 0.25 * (Xs[:, j] @ e) / n + v[j] * tc[j]
                    new = soft_threshold(rho, lam) / v[j]
                    if new != tc[j]:
                        e -= (new - tc[j]) * Xs[:, j]
                        tc[j] = new
                shift = e.mean()
                b[c] += shift
                e -= shift
                F[:, c] = z - e
            P = _softmax(F)
            G = (P - Y).T @ Xs / n
            viol = max(_kkt_violation(G, theta, lam),
                       float(np.max(np.abs((P - Y).mean(axis=0)))))
            if viol <= tol:
                break
            for c in range(ncls):
                work[c] = np.flatnonzero(
                    ((np.abs(G[c]) > lam) | (theta[c] != 0)) & usable)
            if sweep == max_sweeps - 1:
                log.warning("lasso path fit: KKT residual %.3g at lambda=%.3g", viol, lam)
        thetas.append(theta.copy())
        intercepts.append(b.copy())
    return thetas, intercepts


@dataclass
class GlmModel:
    """Multinomial lasso model: intercepts + coefficients on the input scale."""

    classes: np.ndarray
    intercept: np.ndarray     # (C,)
    coef: np.ndarray          # (C, d)
    lambda_: float
    lambda_path: np.ndarray
    loss_path: np.ndarray
    scale_mu: np.ndarray = field(repr=False, default=None)
    scale_sd: np.ndarray = field(repr=False, default=None)

    @property
    def theta(self) -> np.ndarray:
        """Intercept-first coefficient matrix, shape (C, d + 1)."""
        return np.column_stack([self.intercept, self.coef])

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.coef.T + self.intercept

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.decision_scores(X), axis=1)]

    def kkt_residual(self, X: np.ndarray, y) -> float:
        """Max stationarity violation on the (standardized) training problem."""
        Xs = (np.asarray(X, dtype=np.float64) - self.scale_mu) / self.scale_sd
        Y = (np.asarray(y)[:, None] == self.classes[None, :]).astype(np.float64)
        theta_std = self.coef * self.scale_sd
        b = self.intercept + self.coef @ self.scale_mu
        F = Xs @ theta_std.T + b
        G = (_softmax(F) - Y).T @ Xs / Xs.shape[0]
        return _kkt_violation(G, theta_std, self.lambda_)


def glmnet_train(X: np.ndarray, y, lambda_path=None, *, n_lambda: int = 100,
                 lambda_min_ratio: float | None = None, cv_folds: int = 5,
                 seed: int = 0, tol: float = 1e-5, max_sweeps: int = 2000) -> GlmModel:
    """Multinomial lasso fit along a decreasing path, lambda picked by CV loss.

    Columns are standardized internally; the path defaults to `n_lambda`
    log-spaced values from the smallest all-zero lambda downward.  The
    reported model is refit on all rows at the lambda minimizing the mean
    validation loss over `cv_folds` internal folds.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ConfigError("glmnet_train expects X (n, d) and y (n,)")
    if not np.all(np.isfinite(X)):
        raise NumericError("glmnet_train input contains non-finite values")
    classes = np.unique(y)
    if classes.size < 2:
        raise ConfigError("glmnet_train needs at least two classes")
    n, d = X.shape

    Xs, mu, sd = standardize(X)
    Y = (y[:, None] == classes[None, :]).astype(np.float64)

    if lambda_path is None:
        priors = Y.mean(axis=0)
        lam_max = np.max(np.abs((Y - priors).T @ Xs)) / n
        if lambda_min_ratio is None:
            lambda_min_ratio = 1e-4 if n > d else 1e-2
        lambda_path = lam_max * lambda_min_ratio ** (np.arange(n_lambda) / (n_lambda - 1))
    else:
        lambda_path = np.asarray(lambda_path, dtype=np.float64)
        if np.any(np.diff(lambda_path) > 0):
            raise ConfigError("lambda_path must be decreasing")

    rng = np.random.default_rng(seed)
    cv_folds = max(2, min(cv_folds, n // 2))
    folds = _stratified_parts(y, cv_folds, rng)
    losses = np.full((cv_folds, lambda_path.size), np.nan)
    for f, val_idx in enumerate(folds):
        tr = np.setdiff1d(np.arange(n), val_idx)
        if val_idx.size == 0 or np.unique(y[tr]).size < 2:
            continue
        thetas, bs = _fit_multinomial_path(Xs[tr], Y[tr], lambda_path, tol, max_sweeps)
        for i, (th, b) in enumerate(zip(thetas, bs)):
            Fv = Xs[val_idx] @ th.T + b
            losses[f, i] = _mean_nll(Fv, Y[val_idx])
    with np.errstate(invalid="ignore"):
        loss_path = np.nanmean(losses, axis=0)
    best = int(np.argmin(loss_path))
    lam = float(lambda_path[best])

    thetas, bs = _fit_multinomial_path(Xs, Y, lambda_path[: best + 1], tol, max_sweeps)
    theta_std, b_std = thetas[-1], bs[-1]
    coef = theta_std / sd
    intercept = b_std - coef @ mu
    return GlmModel(classes=classes, intercept=intercept, coef=coef, lambda_=lam,
                    lambda_path=lambda_path, loss_path=loss_path,
                    scale_mu=mu, scale_sd=sd)


# ---------------------------------------------------------------------------
# folds, majority vote, cross-validation


def _stratified_parts(labels, num_parts, rng):
    """Per-class shuffled split into num_parts nearly equal index groups."""
    labels = np.asarray(labels)
    parts = [[] for _ in range(num_parts)]
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        base, rem = divmod(idx.size, num_parts)
        start = 0
        for f in range(num_parts):
            take = base + (1 if f < rem else 0)
            parts[f].extend(idx[start:start + take])
            start += take
    return [np.sort(np.array(p, dtype=np.intp)) for p in parts]


def make_folds(track_labels, rng) -> list:
    """Shuffled stratified 3-way fold assignment of track indices.

    Every genre splits as evenly as possible, the first fold taking the
    remainder: 100 tracks per genre give per-fold counts 34/33/33, so a
    1000-track corpus splits 340/330/330.
    """
    labels = np.asarray(track_labels)
    counts = {c: int(np.sum(labels == c)) for c in np.unique(labels)}
    thin = [c for c, k in counts.items() if k < NUM_FOLDS]
    if thin:
        raise DataError(f"genres with fewer than {NUM_FOLDS} tracks: {sorted(thin)}")
    return _stratified_parts(labels, NUM_FOLDS, rng)


def majority_vote(labels, scores=None, classes=None,
                  expected_count: int = SEGMENTS_PER_TRACK):
    """Most frequent segment label; ties break on summed decision scores.

    `scores` (len(labels), C) aligned with `classes` resolves ties by the
    larger total score; without scores, ties fall back to class order.
    """
    labels = list(labels)
    if len(labels) != expected_count:
        raise DataError(f"expected {expected_count} segment labels, got {len(labels)}")
    uniq, counts = np.unique(np.asarray(labels), return_counts=True)
    top = uniq[counts == counts.max()]
    if top.size == 1:
        return top[0]
    if scores is None or classes is None:
        return sorted(top)[0]
    scores = np.asarray(scores)
    classes = list(np.asarray(classes))
    totals = scores.sum(axis=0)
    best, best_total = None, -np.inf
    for cand in sorted(top):
        tot = totals[classes.index(cand)]
        if tot > best_total:
            best, best_total = cand, tot
    return best


@dataclass
class AccuracyReport:
    """Track-level accuracies over repeated 3-fold cross-validation."""

    classes: list
    fold_accuracies: np.ndarray    # (repeats, 3)
    confusion: np.ndarray          # (C, C) counts, rows = truth
    seed: int

    @property
    def repeat_accuracies(self) -> np.ndarray:
        return self.fold_accuracies.mean(axis=1)

    @property
    def mean_accuracy(self) -> float:
        """Mean over repeats of the per-repeat fold averages."""
        return float(self.repeat_accuracies.mean())

    @property
    def per_genre_accuracy(self) -> dict:
        totals = self.confusion.sum(axis=1)
        out = {}
        for i, cls in enumerate(self.classes):
            out[cls] = float(self.confusion[i, i] / totals[i]) if totals[i] else float("nan")
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("repeat,fold,accuracy\n")
            for r in range(self.fold_accuracies.shape[0]):
                for f in range(self.fold_accuracies.shape[1]):
                    fh.write(f"{r},{f},{self.fold_accuracies[r, f]:.6f}\n")
            fh.write(f"mean,,{self.mean_accuracy:.6f}\n")

    def confusion_to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("truth\\predicted," + ",".join(map(str, self.classes)) + "\n")
            for i, cls in enumerate(self.classes):
                row = ",".join(str(int(v)) for v in self.confusion[i])
                fh.write(f"{cls},{row}\n")

    def per_genre_to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("genre,accuracy\n")
            for cls, acc in self.per_genre_accuracy.items():
                fh.write(f"{cls},{acc:.6f}\n")


def cross_validate(X: np.ndarray, segment_tracks: np.ndarray, track_labels,
                   classifier_factory, *, repeats: int = 10, seed: int = 0,
                   pca_k: int | None = 1000, zscore: bool = False) -> AccuracyReport:
    """Repeated stratified 3-fold cross-validation with per-track majority vote.

    Each repeat reshuffles the tracks into stratified folds and rotates the
    test fold three times.  PCA (when `pca_k` is set) is fit on the training
    segments only; test segments are projected with the training model.
    Identical seeds give identical folds and identical reports.
    """
    X = np.asarray(X)
    segment_tracks = np.asarray(segment_tracks)
    track_labels = np.asarray(track_labels)
    if X.shape[0] != segment_tracks.shape[0]:
        raise ConfigError("X rows and segment_tracks must align")
    classes = sorted(np.unique(track_labels).tolist())
    if len(classes) < 2:
        raise DataError("cross_validate needs at least two genres")
    class_index = {c: i for i, c in enumerate(classes)}

    fold_acc = np.zeros((repeats, NUM_FOLDS))
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        folds = make_folds(track_labels, rng)
        for t in range(NUM_FOLDS):
            test_tracks = folds[t]
            train_tracks = np.concatenate([folds[f] for f in range(NUM_FOLDS) if f != t])
            tr_mask = np.isin(segment_tracks, train_tracks)
            te_mask = np.isin(segment_tracks, test_tracks)
            Xtr = np.asarray(X[tr_mask], dtype=np.float64)
            Xte = np.asarray(X[te_mask], dtype=np.float64)
            ytr = track_labels[segment_tracks[tr_mask]]

            if zscore:
                Xtr, mu, sd = standardize(Xtr)
                Xte = (Xte - mu) / sd
            if pca_k is not None:
                k_eff = min(pca_k, min(Xtr.shape))
                pca = fit_pca(Xtr, k_eff, seed=seed * 1000 + r * 10 + t)
                Xtr = pca.project(Xtr)
                Xte = pca.project(Xte)

            clf = classifier_factory(seed * 1000 + r * 10 + t)
            clf.fit(Xtr, ytr)
            pred = np.asarray(clf.predict(Xte))
            scores = clf.decision_scores(Xte)

            seg_track_ids = segment_tracks[te_mask]
            correct = 0
            for track in test_tracks:
                rows = np.flatnonzero(seg_track_ids == track)
                if rows.size != SEGMENTS_PER_TRACK:
                    raise DataError(
                        f"track {track} has {rows.size} segments, expected "
                        f"{SEGMENTS_PER_TRACK}")
                voted = majority_vote(pred[rows], scores[rows], getattr(clf, "classes", None))
                truth = track_labels[track]
                confusion[class_index[truth], class_index[voted]] += 1
                correct += int(voted == truth)
            fold_acc[r, t] = correct / test_tracks.size
    return AccuracyReport(classes=classes, fold_accuracies=fold_acc,
                          confusion=confusion, seed=seed)


class SvmClassifier:
    """Adapter giving svm_train the fit/predict/decision_scores protocol."""

    def __init__(self, C: float = 1.0, tol: float = 1e-4, seed: int = 0):
        self.C = C
        self.tol = tol
        self.seed = seed
        self.model = None

    @property
    def classes(self):
        return self.model.classes if self.model is not None else None

    def fit(self, X, y):
        self.model = svm_train(X, y, self.C, tol=self.tol, seed=self.seed)
        return self

    def predict(self, X):
        return self.model.predict(X)

    def decision_scores(self, X):
        return self.model.decision_scores(X)


class GlmClassifier:
    """Adapter giving glmnet_train the fit/predict/decision_scores protocol."""

    def __init__(self, n_lambda: int = 100, cv_folds: int = 5, seed: int = 0,
                 tol: float = 1e-5):
        self.n_lambda = n_lambda
        self.cv_folds = cv_folds
        self.seed = seed
        self.tol = tol
        self.model = None

    @property
    def classes(self):
        return self.model.classes if self.model is not None else None

    def fit(self, X, y):
        self.model = glmnet_train(X, y, n_lambda=self.n_lambda,
                                  cv_folds=self.cv_folds, seed=self.seed,
                                  tol=self.tol)
        return self

    def predict(self, X):
        return self.model.predict(X)

    def decision_scores(self, X):
        return self.model.decision_scores(X)


def svm_factory(C: float = 1.0, tol: float = 1e-4):
    return lambda seed: SvmClassifier(C=C, tol=tol, seed=seed)


def glmnet_factory(n_lambda: int = 100, cv_folds: int = 5, tol: float = 1e-5):
    return lambda seed: GlmClassifier(n_lambda=n_lambda, cv_folds=cv_folds,
                                      seed=seed, tol=tol)
