#pragma once

#include "pcgkit/core.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const char* env = std::getenv("PCGKIT_TMP");
    const std::filesystem::path root = env ? env : std::filesystem::temp_directory_path() / "pcgkit_tests";
    const auto dir = root / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> x(n);
    for (double& v : x) v = d(rng);
    return x;
}

inline std::vector<double> sine(std::size_t n, double freq, double fs, double amp = 1.0, double phase = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * 3.14159265358979323846 * freq * static_cast<double>(i) / fs + phase);
    return x;
}

/// Recording with HM:1..n_hm and NM:nm, every channel a copy of `fill`.
inline pcgkit::Recording make_recording(const std::vector<double>& fill, int fs, int n_hm = 4, int nm = 4,
                                        std::vector<std::size_t> joins = {}) {
    std::vector<pcgkit::Channel> ch;
    for (int i = 1; i <= n_hm; ++i) ch.push_back({{pcgkit::MicKind::HM, i}, fill});
    if (nm > 0) ch.push_back({{pcgkit::MicKind::NM, nm}, fill});
    return pcgkit::Recording("t", pcgkit::Label::NOR, fs, std::move(ch), std::move(joins));
}

} // namespace testing
