#pragma once

#include "tipsynth/pose.hpp"
#include "tipsynth/train.hpp"

namespace tipsynth {

struct GradCheckRow {
    std::string name;
    double tolerance;
    GradCheckReport report;
    bool passed() const { return report.max_rel_err < tolerance; }
};

// Finite-difference verification of every learned block. Smooth paths are
// held to 1e-4, paths through ReLU/abs/hinge nonlinearities to 1e-3.
inline std::vector<GradCheckRow> gradcheck_battery() {
    RngState rng(42);
    auto random_input = [&](Shape shape) {
        Tens<double> t(std::move(shape));
        for (double& v : t.data) v = rng.normal();
        return t;
    };
    std::vector<GradCheckRow> rows;

    {
        ParamStore ps;
        RngState r(1);
        Linear lin{"l", 6, 4};
        lin.init(ps, r);
        const Tens<double> x = random_input({5, 6});
        rows.push_back({"linear", 1e-4,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           Val<double> y = lin.apply(p, t.leaf(x));
                                           return mean_all(mul(y, y));
                                       },
                                       1e-4)});
    }
    {
        ParamStore ps;
        RngState r(8);
        LayerNorm ln{"n", 6};
        ln.init(ps, r);
        const Tens<double> x = random_input({5, 6});
        rows.push_back({"layernorm", 1e-4,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           Val<double> y = ln.apply(p, t.leaf(x));
                                           return mean_all(mul(y, y));
                                       },
                                       1e-4)});
    }
    {
        ParamStore ps;
        RngState r(2);
        MultiHeadAttention attn{"a", 8, 2};
        attn.init(ps, r);
        const Tens<double> x = random_input({6, 8});
        rows.push_back({"attention", 1e-4,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           Val<double> y = attn.apply(p, t.leaf(x));
                                           return mean_all(mul(y, y));
                                       },
                                       1e-4)});
    }
    {
        ParamStore ps;
        RngState r(3);
        TemporalResNet net{"r", 4, 8, 2, 3, 4, 0};
        net.init(ps, r);
        // zero-initialized tails would make the check vacuous
        init_uniform_fanin(ps.at("r.b0.w2"), 24, r);
        init_uniform_fanin(ps.at("r.b1.w2"), 24, r);
        init_uniform_fanin(ps.at("r.head.w"), 8, r);
        const Tens<double> x = random_input({7, 4});
        rows.push_back({"temporal_conv", 1e-3,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           Val<double> y = net.apply(p, t.leaf(x), Val<double>{});
                                           return mean_all(mul(y, y));
                                       },
                                       1e-4)});
    }
    {
        ParamStore ps;
        RngState r(4);
        const HandGraph graph = build_hand_graph();
        GraphConv gcn{"g", 4, 4, HandGraph::kPartitions};
        gcn.init(ps, r);
        const Tens<double> x = random_input({3, kJointsPerHand, 4});
        rows.push_back({"graph_conv", 1e-4,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           std::vector<Val<double>> adj;
                                           for (const Tensor& a : graph.adjacency)
                                               adj.push_back(t.constant(tensor_cast<double>(a)));
                                           Val<double> y = gcn.apply(p, t.leaf(x), adj);
                                           return mean_all(mul(y, y));
                                       },
                                       1e-4)});
    }
    {
        ParamStore ps;
        RngState r(5);
        FilmGenerator fg{"f", 6, 8, 4};
        fg.init(ps, r);
        init_uniform_fanin(ps.at("f.l2.w"), 8, r);
        const Tens<double> cond = random_input({5, 6});
        const Tens<double> x = random_input({5, 4});
        rows.push_back({"film", 1e-3,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           auto [gamma, beta] = fg.apply(p, t.leaf(cond));
                                           Val<double> y = film(t.leaf(x), gamma, beta);
                                           return mean_all(mul(y, y));
                                       },
                                       1e-4)});
    }
    {
        ParamStore ps;
        ps.add("pred", {4, kFingersPerHand * 3});
        RngState r(6);
        init_normal(ps.at("pred"), 10.0, r);
        const Tens<double> gt = random_input({4, kFingersPerHand, 3});
        rows.push_back({"refine_loss", 1e-3,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           Val<double> pred =
                                               reshape(p("pred"), {4, kFingersPerHand, 3});
                                           return refine_loss(t, pred, t.constant(gt), 1.0, 0.5,
                                                              59.94);
                                       },
                                       1e-4)});
    }
    {
        ParamStore ps;
        ps.add("pose", {3, kJointsPerHand * 3});
        RngState r(7);
        init_normal(ps.at("pose"), 20.0, r);
        const HandGraph graph = build_hand_graph();
        BoneTable bones;
        for (int h = 0; h < 2; ++h)
            for (int b = 0; b < 20; ++b)
                bones.lengths[static_cast<size_t>(h)][static_cast<size_t>(b)] = 30.0;
        const Tens<double> gt = random_input({3, kJointsPerHand, 3});
        rows.push_back({"pose_loss", 1e-3,
                        gradient_check(ps,
                                       [&](Tape<double>& t, const ParamsView<double>& p) {
                                           Val<double> pred =
                                               reshape(p("pose"), {3, kJointsPerHand, 3});
                                           PoseLossWeights w;
                                           return pose_loss_graph(t, pred, t.constant(gt), graph,
                                                                  bones, Hand::Right, w);
                                       },
                                       1e-4)});
    }
    return rows;
}

}  // namespace tipsynth
