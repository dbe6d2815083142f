#pragma once

// Quasi-static two-limb crawler on granular media.
//
// Joints are ordered (left base, right base, left fin, right fin). A base
// joint lowers its limb into the substrate; the fin joint at the limb end
// sweeps the fin plate back and forth. Per step and limb:
//
//   depth    h = L * max(0, sin(base)) * cos(fin)
//   sweep    b = r * sin(fin)                  (backward excursion of the tip)
//   traction F = c_t * rho * A * stiffness * curvature * h * v * (1 - slip) * noise
//
// where v = max(0, db) is the backward tip sweep of the step, weakened to
// v / (1 + v / v_y) in media with a finite sweep yield v_y,
// with noise = max(0, 1 + heterogeneity * g), g standard normal. The hull
// drags with resistance R = c_d * rho * (1 + 5 * moisture), scaled by the
// fraction of the hull still in contact, which falls as the fins plant and
// lift the body. Forward displacement is max(0, F_l + F_r - R * contact) / n.
// There is no inertia: a constant action moves the body at most once.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "groups/environment.hpp"
#include "groups/random.hpp"

namespace groups {

struct FinShape {
  std::string label;
  double area_cm2 = 20.0;
  double curvature_factor = 1.0;  // >= 1
  double stiffness = 1.0;         // in (0, 1]
  void validate() const;
};

struct MediaParams {
  std::string name;
  double density = 1.0;        // g/ml
  double heterogeneity = 0.0;  // std-dev of multiplicative traction noise
  double moisture = 0.0;       // mass fraction
  double traction_coeff = 1.0;
  double body_drag_coeff = 1.0;
  double slip = 0.0;  // [0, 1)
  // Rate weakening: the effective sweep is v / (1 + v / sweep_yield_cm).
  // Zero disables it (rate-independent media).
  double sweep_yield_cm = 0.0;
  void validate() const;
};

struct CrawlerGeometry {
  double limb_length_cm = 10.0;
  double fin_sweep_radius_cm = 5.0;
  double lift_depth_fraction = 0.6;  // mean depth / L at which the hull is fully lifted
  double displacement_normalizer = 1.0;
  double turn_coeff = 0.02;  // radians per unit traction imbalance
  void validate() const;
};

struct Calibration {
  CrawlerGeometry geometry;
  std::map<std::string, MediaParams> media;
  std::map<std::string, FinShape> fins;

  static Calibration from_json(const nlohmann::json& j);
  static Calibration load(const std::filesystem::path& path);
  /// config/default_calibration.json of the source tree.
  static const Calibration& shipped();
  static std::filesystem::path shipped_path();
};

MediaParams preset_media(const std::string& name, const Calibration& cal = Calibration::shipped());
FinShape preset_fin(const std::string& label, const Calibration& cal = Calibration::shipped());

struct CrawlerState {
  double x = 0.0, y = 0.0, heading = 0.0;  // cm, cm, radians
  Eigen::Vector4d joints = Eigen::Vector4d::Zero();
  int step_index = 0;
};

struct StepResult {
  CrawlerState new_state;
  double displacement = 0.0;  // along the body axis, cm
  double lateral = 0.0;       // world-frame y change, cm
  double traction_left = 0.0;
  double traction_right = 0.0;
};

constexpr double kJointLimit = 1.5707963267948966;

/// Canonical start pose; reseeds the media noise stream.
CrawlerState reset(const MediaParams& media, const FinShape& fin, std::uint64_t seed, Rng& rng);

StepResult step(const CrawlerState& state, const Eigen::Vector4d& action, const MediaParams& media,
                const FinShape& fin, const CrawlerGeometry& geometry, Rng& rng);

struct TrajectoryRow {
  int step = 0;
  double x = 0, y = 0, heading = 0;
  Eigen::Vector4d joints = Eigen::Vector4d::Zero();
  double traction_left = 0, traction_right = 0;
};

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

struct CrawlerConfig {
  MediaParams media;
  FinShape fin;
  CrawlerGeometry geometry;
};

/// Runs `steps` steps from reset and returns the final displacement along
/// the initial heading in cm. Optionally records the trajectory.
double rollout(const CrawlerConfig& config, const PolicyExecutor& policy, int steps, std::uint64_t seed,
               std::vector<TrajectoryRow>* trajectory = nullptr);

class CrawlerEnvironment : public Environment {
 public:
  explicit CrawlerEnvironment(CrawlerConfig config) : config_(std::move(config)) {}
  double evaluate(const PolicyExecutor& policy, std::uint64_t seed) const override {
    return rollout(config_, policy, policy.steps(), seed);
  }
  std::string name() const override { return "crawler/" + config_.media.name + "/fin" + config_.fin.label; }
  const CrawlerConfig& config() const { return config_; }

 private:
  CrawlerConfig config_;
};

}  // namespace groups
