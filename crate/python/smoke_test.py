"""Smoke test for the `lmeec` extension module.

Build and install it first, e.g.

    maturin build -m crates/python/Cargo.toml --release -o dist
    pip install dist/lmeec-*.whl
"""

import math

import lmeec


def close(a, b, rel=1e-12):
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0)


def main():
    # first-order radio model
    assert close(lmeec.tx_cost(2000, 10.0), 50e-9 * 2000 + 100e-12 * 2000 * 100.0)
    assert close(lmeec.rx_cost(2000), 1e-4)
    assert close(lmeec.aggregate_cost(4000), 2e-5)

    # layer-1 node, degree 4 of 20, full battery, never served
    w = lmeec.election_weight(1, 4, 0, 2.0, 2.0, 20)
    assert close(w, -2.0 * 0.2 + (1 / 1.5) * 1.0), w
    assert close(lmeec.announcement_weight(1.0, 4, 2), 0.5)
    assert lmeec.leach_threshold(0.05, 19) == 1.0
    assert lmeec.leach_threshold(0.05, 3, eligible=False) == 0.0

    cfg = lmeec.Config()
    cfg.set("sim.duration=100")
    try:
        cfg.set("radio.nope=1")
    except ValueError as e:
        assert "radio.nope" in str(e)
    else:
        raise AssertionError("unknown key accepted")
    assert lmeec.Config.from_toml(cfg.to_toml()).to_toml() == cfg.to_toml()

    topo = lmeec.Topology.deploy(50, 7, cfg)
    assert len(topo) == 50
    layers = topo.layers()
    for i, layer in enumerate(layers):
        if layer == 1:
            assert topo.distance_to_bs(i) <= 25.0
        for j in topo.neighbors(i):
            assert i in topo.neighbors(j)

    for proto in ("lmeec", "leach"):
        m = lmeec.run(50, 7, proto, cfg)
        assert m["protocol"] == proto and m["n"] == 50
        assert len(m["per_round"]) == 5
        for r in m["per_round"]:
            assert abs(r["sum_residual"] + r["sum_dissipated"] - r["sum_initial"]) <= 1e-6 * r["sum_initial"]
        print(f"{proto}: {m['avg_dissipated_per_node']:.4f} J/node over 100 s")

    cfg.set("experiment.node_counts=[30]")
    cfg.set("experiment.seeds=[1, 2]")
    csv, summary = lmeec.sweep(cfg)
    assert len(csv.strip().splitlines()) == 1 + 4
    assert {row["protocol"] for row in summary} == {"lmeec", "leach"}
    print("smoke test passed")


if __name__ == "__main__":
    main()
