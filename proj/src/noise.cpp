#include "cmrplan/noise.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "cmrplan/error.hpp"
#include "cmrplan/rng.hpp"

namespace cmrplan {

namespace {

void validate_rois(const SnrRois& rois, const Dims& d)
{
    validate_roi(rois.signal, d);
    validate_roi(rois.background, d);
    if (rois.signal.overlaps(rois.background)) throw PreconditionError("signal and background ROIs overlap");
}

std::vector<float> add_scaled(std::span<const float> base, std::span<const float> field, double sigma)
{
    std::vector<float> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(base[i]) + sigma * static_cast<double>(field[i]));
    return out;
}

} // namespace

void SnrSpec::validate() const
{
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!(targets[i] > 0.0) || !std::isfinite(targets[i]))
            throw ParameterError("SNR targets must be positive");
        if (i > 0 && !(targets[i] < targets[i - 1]))
            throw ParameterError("SNR targets must be strictly decreasing");
    }
    if (!(tolerance_frac > 0.0 && tolerance_frac < 1.0)) throw ParameterError("tolerance_frac must be in (0, 1)");
    if (max_iters < 1) throw ParameterError("max_iters must be >= 1");
    if (sigma_step && !(*sigma_step > 0.0)) throw ParameterError("sigma_step must be positive");
}

Volume rss_noise_field(const Dims& dims, double sigma, int n_coils, std::uint64_t seed)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("noise sigma must be positive");
    if (n_coils < 1) throw ParameterError("n_coils must be >= 1");
    std::vector<float> data(dims.count());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CounterStream rng(derive_seed(seed, i));
        double ss = 0.0;
        for (int c = 0; c < n_coils; ++c) {
            const auto [re, im] = rng.next_normal_pair();
            ss += re * re + im * im;
        }
        data[i] = static_cast<float>(sigma * std::sqrt(ss));
    }
    VolumeMeta meta;
    meta.n_coils = n_coils;
    meta.provenance = "rss_noise_field";
    return Volume(dims, Spacing{}, std::move(data), std::move(meta));
}

double measure_snr(const Volume& v, const SnrRois& rois)
{
    validate_rois(rois, v.dims());
    const double signal = roi_stats(v, rois.signal).mean;
    const double noise = roi_stats(v, rois.background).stddev;
    if (!(noise > 0.0))
        throw DegenerateInputError("background ROI has zero standard deviation; SNR is undefined");
    return signal / noise;
}

Volume degrade_to_snr(const Volume& v, double target, const SnrRois& rois, const SnrSpec& spec)
{
    spec.validate();
    if (!(target > 0.0)) throw ParameterError("SNR target must be positive");
    const double snr0 = measure_snr(v, rois);
    if (target >= snr0) {
        std::ostringstream os;
        os << "cannot raise SNR: target " << target << " >= current " << snr0;
        throw PreconditionError(os.str());
    }
    const double lo = target * (1.0 - spec.tolerance_frac);
    const double hi = target * (1.0 + spec.tolerance_frac);
    const std::uint64_t stream = derive_seed(spec.seed, std::bit_cast<std::uint64_t>(target));

    auto finish = [&](std::vector<float> data, double snr) {
        VolumeMeta meta = v.meta();
        meta.snr_tag = snr;
        std::ostringstream os;
        os << (meta.provenance.empty() ? "" : meta.provenance + "; ") << "rss noise to snr " << target;
        meta.provenance = os.str();
        return Volume(v.dims(), v.spacing(), std::move(data), std::move(meta));
    };

    std::vector<float> current(v.data().begin(), v.data().end());
    for (int iter = 0; iter < spec.max_iters; ++iter) {
        const Volume unit = rss_noise_field(v.dims(), 1.0, v.meta().n_coils, derive_seed(stream, static_cast<std::uint64_t>(iter)));
        const Volume cur(v.dims(), v.spacing(), current, v.meta());

        double sigma = 0.0;
        if (spec.sigma_step) {
            sigma = *spec.sigma_step;
        } else {
            // Expected SNR after adding sigma * unit field, with the field's
            // mean raising the signal and its variance adding to the background:
            //   (m + sigma mf) / sqrt(s0^2 + sigma^2 sf^2) = target.
            const double m = roi_stats(cur, rois.signal).mean;
            const double s0 = roi_stats(cur, rois.background).stddev;
            const double mf = roi_stats(unit, rois.signal).mean;
            const double sf = roi_stats(unit, rois.background).stddev;
            const double qa = mf * mf - target * target * sf * sf;
            const double qb = 2.0 * m * mf;
            const double qc = m * m - target * target * s0 * s0;
            if (qa < 0.0 && qc > 0.0) {
                sigma = (-qb - std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
            } else {
                sigma = 0.1 * m / target;
            }
        }

        auto snr_at = [&](double s) {
            return measure_snr(Volume(v.dims(), v.spacing(), add_scaled(current, unit.data(), s), v.meta()), rois);
        };

        const double snr = snr_at(sigma);
        if (snr >= lo && snr <= hi) return finish(add_scaled(current, unit.data(), sigma), snr);
        if (snr < lo) {
            // Overshot: bisect the last step's sigma.
            double a = 0.0, b = sigma;
            for (int k = 0; k < 64; ++k) {
                const double mid = 0.5 * (a + b);
                const double s = snr_at(mid);
                if (s >= lo && s <= hi) return finish(add_scaled(current, unit.data(), mid), s);
                (s > target ? a : b) = mid;
            }
            throw ConvergenceError("bisection on noise sigma failed to reach the SNR band");
        }
        current = add_scaled(current, unit.data(), sigma);
    }
    std::ostringstream os;
    os << "SNR target " << target << " not reached within " << spec.max_iters << " iterations";
    throw ConvergenceError(os.str());
}

std::vector<Volume> snr_ladder(const Volume& v, const SnrRois& rois, const SnrSpec& spec)
{
    spec.validate();
    std::vector<Volume> out;
    if (spec.targets.empty()) return out;
    const double snr0 = measure_snr(v, rois);
    if (!(snr0 > spec.targets.front())) {
        std::ostringstream os;
        os << "current SNR " << snr0 << " is not above the highest target " << spec.targets.front();
        throw PreconditionError(os.str());
    }
    out.reserve(spec.targets.size());
    for (double t : spec.targets) out.push_back(degrade_to_snr(v, t, rois, spec));
    return out;
}

double acceleration_headroom(double snr_orig, double snr_new)
{
    if (!(snr_orig > 0.0) || !(snr_new > 0.0)) throw ParameterError("SNR values must be positive");
    const double r = snr_orig / snr_new;
    return r * r;
}

} // namespace cmrplan
