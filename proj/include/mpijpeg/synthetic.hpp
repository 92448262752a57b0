#pragma once

#include <cstdint>

#include "mpijpeg/image.hpp"
#include "mpijpeg/mpi.hpp"

namespace mpijpeg {

struct SyntheticScene {
    MpiStack mpi;
    Image reference;
    CameraModel camera;
};

/// Procedural MPI: an opaque textured backdrop on the farthest plane plus textured rectangles with
/// soft alpha edges on distinct nearer planes. The reference image is the stack's composite.
SyntheticScene generate_synthetic_scene(std::uint64_t seed, int width, int height, int planes = kNumPlanes);

}  // namespace mpijpeg
