#pragma once

#include "tipsynth/motion.hpp"
#include "tipsynth/tensor.hpp"

namespace tipsynth {

// 21-node hand graph: a skeletal tree rooted at the wrist (20 edges) plus 4
// inter-finger MCP links. Spatial partitioning follows the hop<=1 scheme:
// partition 0 holds the node itself and equal-distance neighbors, 1 the
// neighbors closer to the wrist, 2 the farther ones.
struct HandGraph {
    static constexpr int kPartitions = 3;

    std::vector<std::pair<int, int>> edges;            // all 24 undirected edges
    std::array<std::pair<int, int>, 20> bones;         // skeletal (parent, child)
    std::array<int, kJointsPerHand> hop_from_wrist{};  // BFS depth
    std::array<Tensor, kPartitions> adjacency;         // row-normalized [21,21]

    bool connected() const;
};

HandGraph build_hand_graph();

}  // namespace tipsynth
