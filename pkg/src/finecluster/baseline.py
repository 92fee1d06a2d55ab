"""k-PCA baseline: project onto the top principal directions, then k-means."""
import numpy as np
from scipy.cluster.vq import kmeans2

from .spectral import covariance, top_k_eigs


def kpca_cluster(X, k, seed=0):
    """Labels from k-means++ on the projection onto the top ``k`` principal components."""
    X = np.asarray(X, dtype=np.float64)
    k_proj = min(k, X.shape[1])
    _, U = top_k_eigs(covariance(X), k_proj)
    Y = (X - X.mean(axis=0)) @ U
    _, labels = kmeans2(Y, k, minit="++", seed=np.random.default_rng(seed))
    return labels.astype(np.int64)
