#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmrplan/io.hpp"

namespace cmrplan {

// Which of the available features a model (or genome) uses.
class FeatureMask {
public:
    FeatureMask() = default;
    explicit FeatureMask(std::size_t n, bool value = false) : bits_(n, value) {}
    explicit FeatureMask(std::vector<bool> bits) : bits_(std::move(bits)) {}

    std::size_t size() const noexcept { return bits_.size(); }
    bool operator[](std::size_t i) const { return bits_.at(i); }
    void set(std::size_t i, bool value = true) { bits_.at(i) = value; }
    std::size_t count() const noexcept;
    bool any() const noexcept { return count() > 0; }
    std::vector<std::size_t> indices() const;
    // "1011" with feature 0 first.
    std::string to_string() const;
    static FeatureMask from_string(const std::string& s);

    friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
    friend auto operator<=>(const FeatureMask& a, const FeatureMask& b) { return a.bits_ <=> b.bits_; }

private:
    std::vector<bool> bits_;
};

struct SvrParams {
    double c_penalty = 1.0;
    double gamma = 1.0;
    double epsilon = 0.1;
    double tolerance = 1e-3; // maximal KKT violation at solver termination
    void validate() const;
};

// Per-feature standardization of the selected features.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct TargetScaler {
    double mean = 0.0;
    double stddev = 1.0;
};

struct SvrModel {
    SvrParams params;
    FeatureMask feature_mask;
    std::vector<std::string> feature_names; // selected features only; may be empty
    Scaler scaler;
    std::vector<std::vector<double>> support_vectors; // standardized
    std::vector<double> dual_coeffs;                  // alpha - alpha*
    double bias = 0.0;                                 // in standardized target units
    TargetScaler target_scaler;
};

struct TrainingSample {
    std::vector<double> features; // all available features; the mask selects
    double target = 0.0;
};

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

struct DualSolution {
    Eigen::VectorXd coeffs; // alpha - alpha*, one per sample
    double bias = 0.0;
    double objective = 0.0; // dual objective being maximized
    std::size_t iterations = 0;
};

// Epsilon-SVR dual by SMO with second-order working-set selection. `tol` bounds
// the maximal KKT violation at termination.
DualSolution solve_svr_dual(const Eigen::MatrixXd& kernel, std::span<const double> y, double c, double epsilon,
                            double tol = 1e-5, std::size_t max_iter = 1'000'000);

// Dual objective of arbitrary (alpha, alpha*) at zero-crossing split of `coeffs`.
double svr_dual_objective(const Eigen::MatrixXd& kernel, std::span<const double> y, const Eigen::VectorXd& coeffs,
                          double epsilon);

SvrModel train(std::span<const TrainingSample> data, const SvrParams& p, const FeatureMask& mask,
               std::span<const std::string> feature_names = {});
double predict(const SvrModel& m, std::span<const double> features);

io::Json to_json(const SvrModel& m);
SvrModel svr_model_from_json(const io::Json& j);
void save_model(const SvrModel& m, const std::string& path);
SvrModel load_model(const std::string& path);

} // namespace cmrplan
