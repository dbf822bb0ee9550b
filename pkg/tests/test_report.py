import numpy as np

from gaitenroll.metrics import (
    Confusion,
    average_precision,
    confusion,
    f1,
    mcc,
    roc_auc,
)
from gaitenroll.report import (
    EvalReport,
    comparison_table,
    load_report,
    parse_scores_csv,
    pr_csv,
    roc_csv,
    save_report,
    scores_csv,
)


def _report(name="run1", **kw):
    conf = Confusion(tp=40, fp=5, fn=3, tn=48)
    base = dict(
        name=name,
        mcc=mcc(conf),
        auc=0.987,
        f1=f1(conf),
        ap=0.991,
        threshold=0.5,
        confusion=conf,
        n_probes=conf.total,
        scenario_spec={"gallery_ids": 16, "walks_per_id": 4, "pos_probes": 43, "neg_probes": 53, "seed": 1},
        digests={"embeddings": "sha256:x"},
    )
    base.update(kw)
    return EvalReport(**base)


def test_report_round_trip(tmp_path):
    rep = _report()
    path = tmp_path / "report.json"
    save_report(path, rep)
    again = load_report(path)
    assert again["metrics"]["mcc"] == rep.mcc
    assert again["confusion"] == {"tp": 40, "fp": 5, "fn": 3, "tn": 48}
    assert again["n_probes"] == 96
    # deterministic bytes
    path2 = tmp_path / "report2.json"
    save_report(path2, rep)
    assert path.read_bytes() == path2.read_bytes()


def test_scores_csv_round_trip_and_metric_recompute():
    local = np.random.default_rng(5)
    rows = []
    for i in range(60):
        label = int(local.integers(0, 2))
        score = float(local.normal() * 0.3 + 0.5 * label)
        rows.append((f"id{i:03d}", f"w{i}", label, score, 1 if score >= 0.5 else 0))
    text = scores_csv(rows)
    back = parse_scores_csv(text)
    assert sorted(rows) == back
    labels = [r[2] for r in back]
    scores = [r[3] for r in back]
    decisions = [r[4] for r in back]
    conf = confusion(labels, decisions)
    # exact float round trip makes recomputation exact
    assert mcc(conf) == mcc(confusion([r[2] for r in rows], [r[4] for r in rows]))
    assert roc_auc(scores, labels) == roc_auc([r[3] for r in rows], [r[2] for r in rows])
    assert average_precision(scores, labels) == average_precision(
        [r[3] for r in rows], [r[2] for r in rows]
    )


def test_curve_csvs_have_headers_and_parse():
    scores = [0.9, 0.8, 0.8, 0.3, 0.2]
    labels = [1, 1, 0, 0, 1]
    roc_text = roc_csv(scores, labels)
    pr_text = pr_csv(scores, labels)
    assert roc_text.startswith("threshold,fpr,tpr\n")
    assert pr_text.startswith("threshold,recall,precision\n")
    rows = [line.split(",") for line in roc_text.strip().splitlines()[1:]]
    assert float(rows[0][1]) == 0.0 and float(rows[0][2]) == 0.0
    assert float(rows[-1][1]) == 1.0 and float(rows[-1][2]) == 1.0


def test_comparison_table(tmp_path):
    r1, r2 = _report("model"), _report("baseline", auc=0.91)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_report(p1, r1)
    save_report(p2, r2)
    csv_text, aligned = comparison_table([load_report(p1), load_report(p2)])
    lines = csv_text.strip().splitlines()
    assert lines[0] == "name,mcc,auc,f1,ap,threshold,n_probes"
    assert len(lines) == 3
    assert lines[1].startswith("model,")
    assert "baseline" in aligned
