#pragma once

#include <string>

#include "tipsynth/motion.hpp"
#include "tipsynth/score.hpp"

namespace tipsynth {

// Binary trajectory file:
//   magic "TPTJ", version u32, fps_num u32, fps_den u32, T u32, J u32,
//   hand u8 ('L'/'R'), stage tag (u8 length + bytes),
//   payload T*J*3 float32 little-endian (mm), CRC32 trailer.
struct TrajectoryFile {
    MotionTrack track;
    Hand hand = Hand::Right;
    std::string stage;
    int64_t fps_num = 60000;
    int64_t fps_den = 1001;
};

void save_trajectory(const std::string& path, const MotionTrack& track, Hand hand,
                     const std::string& stage_tag, const FrameGrid& grid);
TrajectoryFile load_trajectory(const std::string& path);

}  // namespace tipsynth
