#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cmrplan/volume.hpp"

namespace cmrplan {

struct SnrSpec {
    std::vector<double> targets{30.0, 25.0, 20.0, 15.0, 10.0};
    double tolerance_frac = 0.05;
    // Fixed per-iteration noise sigma. When unset, each iteration picks the
    // sigma whose variance closes the remaining gap to the target.
    std::optional<double> sigma_step;
    int max_iters = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SnrRois {
    BoxRoi signal;
    BoxRoi background;
};

// Multi-coil magnitude noise: sqrt(sum over coils of re^2 + im^2) with
// re, im ~ N(0, sigma^2). Each voxel has its own counter stream keyed by
// (seed, voxel index).
Volume rss_noise_field(const Dims& dims, double sigma, int n_coils, std::uint64_t seed);

// Mean of the signal ROI over the population stddev of the background ROI.
double measure_snr(const Volume& v, const SnrRois& rois);

// Adds RSS noise fields to v until the measured SNR is within
// target * (1 +- tolerance_frac). The result is tagged with the measured SNR.
Volume degrade_to_snr(const Volume& v, double target, const SnrRois& rois, const SnrSpec& spec);

// One volume per target, each derived from the original (not chained).
std::vector<Volume> snr_ladder(const Volume& v, const SnrRois& rois, const SnrSpec& spec);

// Acquisition speed-up allowed by an SNR drop, using SNR ~ sqrt(acquisition time).
double acceleration_headroom(double snr_orig, double snr_new);

} // namespace cmrplan
