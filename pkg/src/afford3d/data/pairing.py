from collections import OrderedDict

import numpy as np


def pair_for_training(split, seed=0, epoch=0):
    """Pair every training cloud with two images of the same category and label.

    Candidates are drawn without replacement when at least two exist, otherwise the
    single candidate is used twice. The draw is resampled per epoch under ``seed``.
    Returns a list of ``(sample, image)`` where ``sample`` supplies cloud, mask and label.
    """
    train = list(split.train)
    if not train:
        raise ValueError("cannot pair an empty training split")
    clouds = OrderedDict()
    pools = {}
    for s in train:
        clouds.setdefault(s.cloud_id, s)
        pools.setdefault((s.category, int(s.label)), []).append(s.image)
    rng = np.random.default_rng([seed, epoch])
    pairs = []
    for sample in clouds.values():
        pool = pools[(sample.category, int(sample.label))]
        if len(pool) >= 2:
            idx = rng.choice(len(pool), size=2, replace=False)
        else:
            idx = [0, 0]
        pairs.extend((sample, pool[i]) for i in idx)
    return pairs
