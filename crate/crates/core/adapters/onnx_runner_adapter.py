"""difftox runner adapter around onnxruntime (CPU, single thread).

  --model M --inputs BATCH --task T --out RECORDS

BATCH holds "id<TAB>path" lines; paths are .npy image tensors or .json token
files. RECORDS receives a JSON array of inference records with raw tensor
payloads; the framework does the task-specific shaping. Session load
failures exit nonzero. Failures on a single input become error payloads.
"""

import argparse
import json
import math
import sys
import time
import zlib

SEP_ID = 1


def token_ids(tokens, vocab):
    return [2 + zlib.crc32(t.encode("utf-8")) % max(vocab - 2, 1) for t in tokens]


def tensor_payload(arrays):
    import numpy as np

    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    if len(arrays) > 1 and all(a.shape == arrays[0].shape for a in arrays):
        arr = np.stack(arrays)
    else:
        arr = arrays[0]
    data = arr.reshape(-1).tolist()
    if not all(math.isfinite(v) for v in data):
        return {"kind": "error", "message": "non-finite values in model output"}
    return {"kind": "tensor", "tensor": {"shape": list(arr.shape), "data": data}}


class Model:
    def __init__(self, path):
        import onnxruntime as ort

        opts = ort.SessionOptions()
        opts.intra_op_num_threads = 1
        opts.inter_op_num_threads = 1
        self.session = ort.InferenceSession(path, sess_options=opts, providers=["CPUExecutionProvider"])
        self.inputs = self.session.get_inputs()
        meta = self.session.get_modelmeta().custom_metadata_map
        self.vocab = int(meta.get("vocab_size", 30522))
        eos = meta.get("eos_token_id")
        self.eos = int(eos) if eos is not None else None

    def _dtype(self, i):
        import numpy as np

        t = self.inputs[i].type
        return {"tensor(float)": np.float32, "tensor(double)": np.float64,
                "tensor(int64)": np.int64, "tensor(int32)": np.int32}.get(t, np.float32)

    def run_tensor(self, arr):
        feed = {self.inputs[0].name: arr.astype(self._dtype(0))}
        return self.session.run(None, feed)

    def run_ids(self, ids):
        import numpy as np

        feed = {}
        for i, inp in enumerate(self.inputs):
            if "mask" in inp.name:
                feed[inp.name] = np.ones((1, len(ids)), dtype=self._dtype(i))
            elif "type" in inp.name or "segment" in inp.name:
                feed[inp.name] = np.zeros((1, len(ids)), dtype=self._dtype(i))
            else:
                feed[inp.name] = np.asarray([ids], dtype=self._dtype(i))
        return self.session.run(None, feed)

    def generate(self, ids, max_new):
        import numpy as np

        out = []
        for _ in range(max_new):
            logits = np.asarray(self.run_ids(ids + out)[0])
            nxt = int(np.argmax(logits.reshape(-1, logits.shape[-1])[-1]))
            if self.eos is not None and nxt == self.eos:
                break
            out.append(nxt)
        return " ".join(str(t) for t in out)


def infer(model, path, task):
    import numpy as np

    if path.endswith(".npy"):
        return tensor_payload(model.run_tensor(np.load(path)))
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    fields = doc["fields"]
    if task == "question_answering":
        ids = token_ids(fields.get("question", []), model.vocab) + [SEP_ID] + token_ids(fields.get("context", []), model.vocab)
    else:
        ids = [i for name in sorted(fields) for i in token_ids(fields[name], model.vocab)]
    if task == "text_generation":
        return {"kind": "text", "text": model.generate(ids, int(doc.get("max_new_tokens", 64)))}
    return tensor_payload(model.run_ids(ids))


def main(argv):
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", required=True)
    ap.add_argument("--inputs", required=True)
    ap.add_argument("--task", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    model = Model(args.model)
    records = []
    with open(args.inputs, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            input_id, path = line.split("\t", 1)
            start = time.perf_counter()
            try:
                payload = infer(model, path, args.task)
            except Exception as exc:  # per-input failures do not abort the batch
                payload = {"kind": "error", "message": "%s: %s" % (type(exc).__name__, exc)}
            records.append({
                "input_id": input_id,
                "payload": payload,
                "runtime_warnings": [],
                "wall_time": time.perf_counter() - start,
            })
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(records, fh)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
