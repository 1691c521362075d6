"""Smoke test for the latentid_py extension module.

Build and install the wheel first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/latentid_py-*.whl
    python python/smoke_test.py
"""

import json
import random

import latentid_py as lid


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok   {what}")


def main():
    kr = lid.khatri_rao([[[0.5, 0.5], [0.1, 0.9]], [[1.0, 0.0], [0.3, 0.7]]])
    check(kr[1] == [0.1 * 0.3, 0.1 * 0.7, 0.9 * 0.3, 0.9 * 0.7], "khatri_rao row layout")
    check(lid.kruskal_rank([[1, 0], [1, 0], [0, 1]]) == 1, "kruskal rank of duplicated rows")
    check(lid.min_variables_bound(5, 2) == 7, "variable bound for r=5, kappa=2")
    check(lid.min_window(4, 2) == 3, "hmm window for r=4, kappa=2")
    check(not lid.tripartition_search(3, [2, 2, 2, 2])["holds"], "no certificate for M(3; 2,2,2,2)")

    model = lid.LatentClassModel.random(3, [2, 2, 2, 2, 2], seed=7)
    search = lid.tripartition_search(model.r, model.kappas)
    check(search["holds"], "tripartition found for r=3, p=5")
    dims, data = model.joint()
    rec, residual = lid.recover_latent_class(dims, data, model.r, search["witness"], seed=1)
    check(residual < 1e-8 and rec.alignment_error(model) < 1e-8, "latent-class round trip")
    again = lid.LatentClassModel.from_json(model.to_json())
    check(again.alignment_error(model) == 0.0, "model file round trip")

    h = lid.HiddenMarkovModel([[0.9, 0.1], [0.3, 0.7]], [[0.8, 0.2], [0.25, 0.75]])
    check(h.certificate()["holds"], "hmm certificate")
    tdims, tdata = h.window_tensor(1)
    got, _ = lid.recover_hmm(list(tdims), tdata, 2, 2, 1)
    check(got.alignment_error(h) < 1e-6, "hmm round trip")

    g = lid.GraphMixtureModel([0.3, 0.7], [[0.2, 0.5], [0.5, 0.8]])
    check(g.certificate(4)["holds"], "graph certificate on 16 nodes")
    n = 4
    prior = g.node_state_prior(n)
    order = list(range(len(prior)))
    random.Random(3).shuffle(order)
    states = lambda idx: [(idx >> (n - 1 - k)) & 1 for k in range(n)]
    params = lid.extract_parameters(
        [prior[i] for i in order], lambda row, e: g.edge_probability(states(order[row]), e), n
    )
    check(abs(params["p12"] - 0.5) < 1e-12 and abs(params["pi"][0] - 0.3) < 1e-12, "graph parameter extraction")

    np_model = {
        "type": "nonparametric", "r": 2, "p": 3, "block_dims": [1, 1, 1], "pi": [0.4, 0.6],
        "components": [
            [{"knots": [0, 1], "values": [0, 1]}, {"knots": [0, 1], "values": [0, 1]},
             {"knots": [0, 0.5, 1], "values": [0, 0.8, 1]}],
            [{"knots": [0, 2], "values": [0, 1]}, {"knots": [1, 2], "values": [0, 1]},
             {"knots": [0, 1.5, 2], "values": [0, 0.25, 1]}],
        ],
    }
    mix = lid.NonparametricMixture.from_json(json.dumps(np_model))
    check(mix.cut_points(0) == [[0.5]], "cut points for two uniforms")
    queries = [[[0.1 * q] for q in range(1, 21)] for _ in range(3)]
    pi, values, error = mix.recover(queries)
    check(error < 1e-6, "nonparametric round trip")

    try:
        lid.LatentClassModel([0.5, 0.6], [[[1, 0], [0, 1]]] * 3)
    except lid.LatentIdError:
        check(True, "invalid weights raise LatentIdError")
    else:
        check(False, "invalid weights raise LatentIdError")


if __name__ == "__main__":
    main()
