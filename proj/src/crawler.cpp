#include "groups/crawler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace groups {

void FinShape::validate() const {
  if (!(area_cm2 > 0)) throw std::invalid_argument("fin " + label + ": area must be positive");
  if (!(curvature_factor >= 1)) throw std::invalid_argument("fin " + label + ": curvature_factor must be >= 1");
  if (!(stiffness > 0 && stiffness <= 1)) throw std::invalid_argument("fin " + label + ": stiffness must be in (0, 1]");
}

void MediaParams::validate() const {
  if (!(density > 0)) throw std::invalid_argument("media " + name + ": density must be positive");
  if (!(heterogeneity >= 0)) throw std::invalid_argument("media " + name + ": heterogeneity must be >= 0");
  if (!(moisture >= 0 && moisture < 1)) throw std::invalid_argument("media " + name + ": moisture must be in [0, 1)");
  if (!(slip >= 0 && slip < 1)) throw std::invalid_argument("media " + name + ": slip must be in [0, 1)");
  if (!(sweep_yield_cm >= 0)) throw std::invalid_argument("media " + name + ": sweep_yield_cm must be >= 0");
  if (!(traction_coeff >= 0) || !(body_drag_coeff >= 0))
    throw std::invalid_argument("media " + name + ": coefficients must be nonnegative");
}

void CrawlerGeometry::validate() const {
  if (!(limb_length_cm > 0 && fin_sweep_radius_cm > 0 && lift_depth_fraction > 0 && displacement_normalizer > 0))
    throw std::invalid_argument("crawler geometry: lengths and normalizer must be positive");
  if (!std::isfinite(turn_coeff)) throw std::invalid_argument("crawler geometry: turn_coeff must be finite");
}

Calibration Calibration::from_json(const nlohmann::json& j) {
  Calibration cal;
  auto& g = cal.geometry;
  g.limb_length_cm = j.value("limb_length_cm", g.limb_length_cm);
  g.fin_sweep_radius_cm = j.value("fin_sweep_radius_cm", g.fin_sweep_radius_cm);
  g.lift_depth_fraction = j.value("lift_depth_fraction", g.lift_depth_fraction);
  g.displacement_normalizer = j.value("displacement_normalizer", g.displacement_normalizer);
  g.turn_coeff = j.value("turn_coeff", g.turn_coeff);
  g.validate();

  const double traction = j.value("traction_coeff", 1.0);
  const double drag = j.value("body_drag_coeff", 1.0);
  for (const auto& [name, m] : j.at("media").items()) {
    MediaParams p;
    p.name = name;
    p.density = m.at("density").get<double>();
    p.heterogeneity = m.value("heterogeneity", 0.0);
    p.moisture = m.value("moisture", 0.0);
    p.traction_coeff = m.value("traction_coeff", traction);
    p.body_drag_coeff = m.value("body_drag_coeff", drag);
    p.slip = m.value("slip", 0.0);
    p.sweep_yield_cm = m.value("sweep_yield_cm", 0.0);
    p.validate();
    cal.media[name] = p;
  }
  for (const auto& [label, f] : j.at("fins").items()) {
    FinShape s;
    s.label = label;
    s.area_cm2 = f.at("area_cm2").get<double>();
    s.curvature_factor = f.value("curvature_factor", 1.0);
    s.stiffness = f.value("stiffness", 1.0);
    s.validate();
    cal.fins[label] = s;
  }
  return cal;
}

Calibration Calibration::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw std::runtime_error("calibration " + path.string() + ": " + e.what());
  }
}

std::filesystem::path Calibration::shipped_path() {
  return std::filesystem::path(GROUPS_CONFIG_DIR) / "default_calibration.json";
}

const Calibration& Calibration::shipped() {
  static const Calibration cal = load(shipped_path());
  return cal;
}

MediaParams preset_media(const std::string& name, const Calibration& cal) {
  const auto it = cal.media.find(name);
  if (it == cal.media.end()) throw std::invalid_argument("unknown media preset '" + name + "'");
  return it->second;
}

FinShape preset_fin(const std::string& label, const Calibration& cal) {
  const auto it = cal.fins.find(label);
  if (it == cal.fins.end()) throw std::invalid_argument("unknown fin '" + label + "'");
  return it->second;
}

CrawlerState reset(const MediaParams& media, const FinShape& fin, std::uint64_t seed, Rng& rng) {
  media.validate();
  fin.validate();
  rng.seed(seed);
  return CrawlerState{};
}

StepResult step(const CrawlerState& state, const Eigen::Vector4d& action, const MediaParams& media,
                const FinShape& fin, const CrawlerGeometry& geometry, Rng& rng) {
  if (!action.allFinite()) throw std::invalid_argument("step: non-finite action");
  const Eigen::Vector4d target = action.cwiseMax(-kJointLimit).cwiseMin(kJointLimit);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double L = geometry.limb_length_cm;
  const double fin_scale = media.traction_coeff * media.density * fin.area_cm2 * fin.stiffness *
                           fin.curvature_factor * (1.0 - media.slip);
  double traction[2] = {0.0, 0.0};
  double depth[2] = {0.0, 0.0};
  for (int limb = 0; limb < 2; ++limb) {
    const double base = target(limb), fin_new = target(2 + limb), fin_old = state.joints(2 + limb);
    depth[limb] = L * std::max(0.0, std::sin(base)) * std::cos(fin_new);
    double sweep = std::max(0.0, geometry.fin_sweep_radius_cm * (std::sin(fin_new) - std::sin(fin_old)));
    if (media.sweep_yield_cm > 0) sweep /= 1.0 + sweep / media.sweep_yield_cm;
    const double noise = std::max(0.0, 1.0 + media.heterogeneity * normal(rng));
    traction[limb] = fin_scale * depth[limb] * sweep * noise;
  }

  const double lift = std::min(1.0, 0.5 * (depth[0] + depth[1]) / (geometry.lift_depth_fraction * L));
  const double resistance = media.body_drag_coeff * media.density * (1.0 + 5.0 * media.moisture);
  const double thrust = traction[0] + traction[1];
  const double forward = std::max(0.0, thrust - resistance * (1.0 - lift)) / geometry.displacement_normalizer;
  const double turn = geometry.turn_coeff * (traction[1] - traction[0]) / geometry.displacement_normalizer;

  StepResult out;
  out.traction_left = traction[0];
  out.traction_right = traction[1];
  out.displacement = forward;
  const double mid = state.heading + 0.5 * turn;
  out.new_state = state;
  out.new_state.x += forward * std::cos(mid);
  out.lateral = forward * std::sin(mid);
  out.new_state.y += out.lateral;
  out.new_state.heading += turn;
  out.new_state.joints = target;
  out.new_state.step_index += 1;
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  out << "step,x,y,heading,joint_left_base,joint_right_base,joint_left_fin,joint_right_fin,traction_l,traction_r\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.step, r.x, r.y, r.heading, r.joints(0), r.joints(1),
                       r.joints(2), r.joints(3), r.traction_left, r.traction_right);
}

double rollout(const CrawlerConfig& config, const PolicyExecutor& policy, int steps, std::uint64_t seed,
               std::vector<TrajectoryRow>* trajectory) {
  if (steps < 1) throw std::invalid_argument("rollout: steps must be >= 1");
  if (policy.action_dim() != 4) throw std::invalid_argument("rollout: crawler policies have 4 action dimensions");
  Rng rng;
  CrawlerState state = reset(config.media, config.fin, seed, rng);
  if (trajectory) trajectory->push_back({0, 0, 0, 0, state.joints, 0, 0});
  for (int t = 0; t < steps; ++t) {
    const Eigen::Vector4d action = policy.action(t);
    const StepResult r = step(state, action, config.media, config.fin, config.geometry, rng);
    state = r.new_state;
    if (trajectory)
      trajectory->push_back({state.step_index, state.x, state.y, state.heading, state.joints, r.traction_left,
                             r.traction_right});
  }
  // Projection on the initial heading, which reset fixes at zero.
  return state.x;
}

}  // namespace groups
