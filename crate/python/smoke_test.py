"""Exercise the Python bindings end to end on a small synthetic corpus."""

import math
import tempfile

import nanores


def main():
    print("nanores", nanores.__version__)

    side = 10 * math.sqrt(120)
    net = nanores.Network({"n_wires": 120, "substrate_side": side, "seed": 3, "max_retries": 64})
    print(net, "source", net.source_wire, "ground", net.ground_wire)
    assert net.n_junctions == len(net.edges())
    again = nanores.Network.from_json(net.to_json())
    assert again.edges() == net.edges()

    # two unit resistors in series
    r = nanores.solve(3, [(0, 1), (1, 2)], [1.0, 1.0], 0, 2, 2.0)
    assert abs(r["g_eff"] - 0.5) < 1e-12 and abs(r["node_voltages"][1] - 1.0) < 1e-12

    kp, kd = nanores.rates(0.0)
    assert abs(kp - 0.001) < 1e-15 and abs(kd - 0.5) < 1e-15

    drive = nanores.standardize([0.2, 0.4, 0.6, 0.8], t=2, v_p=1.0)
    assert abs(drive[0] - 3 / 7) < 1e-12 and drive[1] == 1.0
    assert nanores.subsample(list(range(8)), 4) == [0, 2, 4, 6]

    g = net.simulate([1.0, -1.0] * 32)
    assert len(g) == 64 and all(x > 0 for x in g)

    reservoir_cfg = {
        "assembly": {"n_wires": 120, "substrate_side": side, "seed": 3, "max_retries": 64},
        "t": 128,
    }
    res = nanores.Reservoir(reservoir_cfg)
    assert res.network.edges() == net.edges()

    with tempfile.TemporaryDirectory() as tmp:
        n = nanores.synth(tmp, {"speakers": ["jackson"], "trials": 4})
        entries = nanores.manifest(tmp)
        assert n == len(entries) == 40

        import struct
        import wave

        rows, labels = [], []
        for e in entries:
            with wave.open(e["path"]) as w:
                frames = w.readframes(w.getnframes())
            samples = [s / 32768 for s in struct.unpack(f"<{len(frames) // 2}h", frames)]
            trace = res.run(samples, e["speaker"], e["digit"], e["trial"])
            rows.append(nanores.subsample(trace, 32))
            labels.append(e["digit"])
        model = nanores.train("lr", rows, labels)
        report = model.evaluate(rows, labels)
        print("train accuracy", report["accuracy"])
        assert sum(map(sum, report["confusion"])) == 40
        assert model.predict(rows[0]) in model.classes

        summary = nanores.run_experiment(
            {
                "task": "distance",
                "reservoir": reservoir_cfg,
                "manifest": tmp + "/manifest.json",
                "output_dir": tmp + "/out",
            }
        )
        print("distance task:", summary["n_clips"], "clips,", len(summary["outputs"]), "artifacts")

    try:
        nanores.Reservoir({"t": 0})
    except ValueError as exc:
        print("rejected:", exc)
    else:
        raise AssertionError("t = 0 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
