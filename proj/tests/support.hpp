#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mpijpeg/image.hpp"
#include "mpijpeg/mpi.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return MPIJPEG_TEST_DATA; }

inline mpijpeg::Image random_image(mpijpeg::Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    mpijpeg::Image img(h, w, c);
    for (float& v : img.data()) v = static_cast<float>(u(rng));
    return img;
}

// 32 random planes; alphas are kept low so the far planes still show through.
inline mpijpeg::MpiStack random_stack(mpijpeg::Rng& rng, int h, int w, double max_alpha = 0.3) {
    std::vector<mpijpeg::Image> planes;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < mpijpeg::kNumPlanes; ++i) {
        auto p = random_image(rng, h, w, 4);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) p.at(y, x, 3) = static_cast<float>(max_alpha * u(rng));
        planes.push_back(std::move(p));
    }
    return {std::move(planes), mpijpeg::default_depths()};
}

// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mpijpeg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
