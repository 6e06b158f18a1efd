#include "tipsynth/hand_graph.hpp"

#include <queue>

namespace tipsynth {

bool HandGraph::connected() const {
    std::array<bool, kJointsPerHand> seen{};
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    int count = 1;
    while (!q.empty()) {
        const int n = q.front();
        q.pop();
        for (const auto& [a, b] : edges) {
            const int other = a == n ? b : (b == n ? a : -1);
            if (other >= 0 && !seen[static_cast<size_t>(other)]) {
                seen[static_cast<size_t>(other)] = true;
                ++count;
                q.push(other);
            }
        }
    }
    return count == kJointsPerHand;
}

HandGraph build_hand_graph() {
    HandGraph g;
    int bone = 0;
    for (int f = 0; f < kFingersPerHand; ++f) {
        const int mcp = finger_joint(f, 0);
        g.bones[static_cast<size_t>(bone++)] = {kWristJoint, mcp};
        for (int part = 0; part < 3; ++part) {
            g.bones[static_cast<size_t>(bone++)] = {finger_joint(f, part), finger_joint(f, part + 1)};
        }
    }
    for (const auto& b : g.bones) g.edges.push_back(b);
    for (int f = 0; f + 1 < kFingersPerHand; ++f) {
        g.edges.push_back({finger_joint(f, 0), finger_joint(f + 1, 0)});
    }

    // BFS hop distance from the wrist
    g.hop_from_wrist.fill(-1);
    g.hop_from_wrist[0] = 0;
    std::queue<int> q;
    q.push(0);
    while (!q.empty()) {
        const int n = q.front();
        q.pop();
        for (const auto& [a, b] : g.edges) {
            const int other = a == n ? b : (b == n ? a : -1);
            if (other >= 0 && g.hop_from_wrist[static_cast<size_t>(other)] < 0) {
                g.hop_from_wrist[static_cast<size_t>(other)] = g.hop_from_wrist[static_cast<size_t>(n)] + 1;
                q.push(other);
            }
        }
    }

    for (int p = 0; p < HandGraph::kPartitions; ++p)
        g.adjacency[static_cast<size_t>(p)] = Tensor({kJointsPerHand, kJointsPerHand});

    auto assign = [&](int i, int j) {
        const int di = g.hop_from_wrist[static_cast<size_t>(i)];
        const int dj = g.hop_from_wrist[static_cast<size_t>(j)];
        const int p = i == j ? 0 : (dj == di ? 0 : (dj < di ? 1 : 2));
        g.adjacency[static_cast<size_t>(p)].data[static_cast<size_t>(i * kJointsPerHand + j)] = 1.0f;
    };
    for (int i = 0; i < kJointsPerHand; ++i) assign(i, i);
    for (const auto& [a, b] : g.edges) {
        assign(a, b);
        assign(b, a);
    }

    // row-normalize each partition
    for (Tensor& adj : g.adjacency) {
        for (int i = 0; i < kJointsPerHand; ++i) {
            float deg = 0.0f;
            for (int j = 0; j < kJointsPerHand; ++j)
                deg += adj.data[static_cast<size_t>(i * kJointsPerHand + j)];
            if (deg > 0.0f) {
                for (int j = 0; j < kJointsPerHand; ++j)
                    adj.data[static_cast<size_t>(i * kJointsPerHand + j)] /= deg;
            }
        }
    }
    return g;
}

}  // namespace tipsynth
