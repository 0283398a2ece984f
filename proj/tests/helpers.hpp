#pragma once

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "manynode/timingmodel.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Scratch directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("manynode-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Profile with one rank (0) and one phase whose durations are `samples`.
inline manynode::timing::ProfileSet profile_from(int phase, const std::vector<double>& samples) {
    manynode::timing::IntervalSeries series;
    series.phase_id = phase;
    for (double s : samples) series.durations.push_back(static_cast<std::int64_t>(s));
    manynode::timing::ProfileSet set;
    set.ranks[0].phases[phase] = manynode::timing::build_phase_profile(series);
    return set;
}

inline manynode::timing::ProfileSet constant_profile(int phase, double ns) {
    return profile_from(phase, std::vector<double>(4, ns));
}

/// `n` evenly spread samples of Uniform(lo, hi): lo + (hi - lo) * (i + 0.5) / n.
inline std::vector<double> stratified_uniform(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * (i + 0.5) / n);
    return out;
}

}  // namespace testing
