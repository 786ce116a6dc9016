#ifndef RESDIFF_DATASET_HPP
#define RESDIFF_DATASET_HPP

#include <string>
#include <vector>

#include "resdiff/signal.hpp"
#include "resdiff/types.hpp"

namespace resdiff::data {

// Segment corpus with scene provenance, so train/validation/test splits stay
// scene-disjoint.
struct Dataset {
    std::vector<signal::PairedSegment> segments;
    std::vector<int> scene_ids;

    int size() const { return static_cast<int>(segments.size()); }
    bool has_truth() const { return !segments.empty() && segments.front().x.size() > 0; }
    std::vector<int> unique_scenes() const;
};

// Segment CSV: header `idx,y_0..y_{l-1}[,x_0..x_{l-1}]`, one segment per row.
void write_segments_csv(const std::string& path, const std::vector<signal::PairedSegment>& segs);
std::vector<signal::PairedSegment> load_segments_csv(const std::string& path);

// RadarCube file: `<base>.bin` (interleaved little-endian f32 I,Q pairs,
// frame-major) plus a `<base>.json` sidecar with the acquisition metadata.
void write_cube(const std::string& base_path, const signal::RadarCube& cube);
signal::RadarCube load_cube(const std::string& base_path);

// Pack segments into per-row matrices for training (row = one segment).
template <class S>
void to_matrices(const Dataset& ds, MatX<S>& y, MatX<S>& x) {
    if (ds.segments.empty()) throw DataError("dataset: empty");
    const Eigen::Index l = ds.segments.front().y.size();
    y.resize(ds.size(), l);
    x.resize(ds.size(), l);
    for (int i = 0; i < ds.size(); ++i) {
        if (ds.segments[i].y.size() != l || ds.segments[i].x.size() != l)
            throw DataError("dataset: inconsistent segment length");
        y.row(i) = ds.segments[i].y.cast<S>().transpose();
        x.row(i) = ds.segments[i].x.cast<S>().transpose();
    }
}

} // namespace resdiff::data

#endif
