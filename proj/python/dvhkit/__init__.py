"""Python access to the dvhkit DVH prediction core."""

import json

from ._core import Bundle, DvhkitError, __version__, band, evaluate, ingest, synth, train

__all__ = ["Bundle", "DvhkitError", "__version__", "band", "evaluate", "ingest", "synth", "train", "predict"]


def predict(bundle, features, organ="bladder", algorithms=None):
    """Predict curves for one patient; returns the decoded response dict."""
    request = {"organ": organ, "features": dict(features)}
    if algorithms:
        request["algorithms"] = list(algorithms)
    return json.loads(bundle.predict_json(json.dumps(request)))
