#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nasr/matrix.hpp"

namespace nasr {

inline constexpr double kDefaultNeighborRadius = 0.05;  // metres in the head plane

/// Electrode labels with 2D head-plane coordinates in metres.
struct Montage {
    std::vector<std::string> labels;
    Matrix coords;  // C x 2

    std::size_t size() const noexcept { return labels.size(); }
    /// Index of `label`; throws ParameterError when absent.
    std::size_t index_of(const std::string& label) const;
};

/// A[i][j] = 1 iff i != j and ||p_i - p_j|| < radius.
Matrix build_adjacency(const Montage& m, double radius = kDefaultNeighborRadius);

/// CSV with header `label,x_m,y_m`. Errors carry the offending line number.
Montage load_montage(const std::filesystem::path& path);
Montage parse_montage(const std::string& text);

/// The 28-channel fixture shipped under data/.
std::filesystem::path default_montage_path();
Montage default_montage();

}  // namespace nasr
