import json
import os


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "train_loader.json"), "w") as fh:
        json.dump({"batch_size": 64, "dataset": "items.csv"}, fh)
    with open(os.path.join(artifacts_dir, "eval_loader.json"), "w") as fh:
        json.dump({"batch_size": 16}, fh)
