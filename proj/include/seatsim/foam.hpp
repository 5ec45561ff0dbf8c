#pragma once

// Deformable backrest: two foam blocks meshed with linear tetrahedra.
// Node positions live in the seat frame, where fixed nodes never move; world
// positions add the seat displacement.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "seatsim/contact.hpp"
#include "seatsim/dynamics.hpp"
#include "seatsim/errors.hpp"
#include "seatsim/multibody.hpp"

#ifndef SEATSIM_DATA_DIR
#define SEATSIM_DATA_DIR "data"
#endif

namespace seatsim {

inline std::string default_foam_material_path() { return std::string(SEATSIM_DATA_DIR) + "/foam_pu.csv"; }

// ---------------------------------------------------------------- material

struct FoamMaterial {
  std::vector<double> strain;  // compressive, starts at 0
  std::vector<double> stress;  // Pa
  double hysteresis_slope = 5.0e4;
  double density = 45.0;
  double damping_ratio = 0.05;

  void validate() const {
    if (strain.size() < 2 || strain.size() != stress.size())
      throw ValidationError("foam.loading_curve", "needs at least two (strain, stress) rows");
    if (strain.front() != 0.0 || stress.front() != 0.0)
      throw ValidationError("foam.loading_curve", "must start at (0, 0)");
    for (std::size_t i = 1; i < strain.size(); ++i) {
      if (!(strain[i] > strain[i - 1]) || !(stress[i] > stress[i - 1]))
        throw ValidationError("foam.loading_curve", "must be strictly increasing");
    }
    if (strain.back() > 0.9) throw ValidationError("foam.loading_curve", "strains must lie in [0, 0.9]");
    if (!(hysteresis_slope > 0.0)) throw ValidationError("foam.hysteresis_slope", "must be > 0");
    if (!(density > 0.0)) throw ValidationError("foam.density", "must be > 0");
    if (!(damping_ratio >= 0.0)) throw ValidationError("foam.damping_ratio", "must be >= 0");
  }

  /// Piecewise linear; the last segment is extrapolated past the table.
  double loading_stress(double eps) const {
    if (eps <= 0.0) return 0.0;
    auto it = std::upper_bound(strain.begin(), strain.end(), eps);
    std::size_t i = static_cast<std::size_t>(it - strain.begin());
    i = std::clamp<std::size_t>(i, 1, strain.size() - 1);
    const double t = (eps - strain[i - 1]) / (strain[i] - strain[i - 1]);
    return stress[i - 1] + t * (stress[i] - stress[i - 1]);
  }
  double initial_modulus() const { return stress[1] / strain[1]; }
  double max_tangent_modulus() const {
    double k = 0.0;
    for (std::size_t i = 1; i < strain.size(); ++i)
      k = std::max(k, (stress[i] - stress[i - 1]) / (strain[i] - strain[i - 1]));
    return k;
  }
};

inline FoamMaterial load_foam_material(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("foam.material", "cannot open " + path);
  FoamMaterial m;
  m.strain.clear();
  m.stress.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("foam.material", path + ":" + std::to_string(line_no) + ": expected two columns");
    std::string key = line.substr(start, comma - start);
    key.erase(key.find_last_not_of(" \t") + 1);
    const std::string value = line.substr(comma + 1);
    char* end = nullptr;
    const double first = std::strtod(key.c_str(), &end);
    const bool numeric_row = end && *end == '\0' && !key.empty();
    double v = 0.0;
    try {
      v = std::stod(value);
    } catch (const std::exception&) {
      if (key == "strain") continue;  // table header
      throw ConfigError("foam.material", path + ":" + std::to_string(line_no) + ": bad value '" + value + "'");
    }
    if (numeric_row) {
      m.strain.push_back(first);
      m.stress.push_back(v);
    } else if (key == "hysteresis_slope") {
      m.hysteresis_slope = v;
    } else if (key == "density") {
      m.density = v;
    } else if (key == "damping_ratio") {
      m.damping_ratio = v;
    } else {
      throw ConfigError("foam.material", path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  m.validate();
  return m;
}

inline void save_foam_material(const std::string& path, const FoamMaterial& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("foam.material", "cannot write " + path);
  out.precision(17);
  out << "hysteresis_slope," << m.hysteresis_slope << "\ndensity," << m.density << "\ndamping_ratio,"
      << m.damping_ratio << "\nstrain,stress_pa\n";
  for (std::size_t i = 0; i < m.strain.size(); ++i) out << m.strain[i] << ',' << m.stress[i] << '\n';
}

// ---------------------------------------------------------------- hysteresis

/// Per-element memory. `loading` in [0, 1] blends from the unloading line (0)
/// to the loading curve (1); it moves with strain increments only, so the law
/// is rate independent.
struct FoamHistory {
  double max_strain = 0.0;
  double strain = 0.0;
  double loading = 1.0;
};

/// Strain over which a reversal moves fully between branches.
inline constexpr double kFoamTransitionStrain = 0.01;
/// Lower bound on the unloading stress, as a fraction of the initial-modulus line.
inline constexpr double kFoamResidualFraction = 0.05;

/// Compressive stress at strain `eps` (>= 0) given the committed history.
/// Unloading follows a line of slope `hysteresis_slope` from the historical
/// maximum down to its shifted origin, never above the loading curve.
inline double foam_stress(const FoamMaterial& m, const FoamHistory& h, double eps, FoamHistory* next = nullptr) {
  const double eps_max = std::max(h.max_strain, eps);
  const double load = m.loading_stress(eps);
  double unload = m.loading_stress(eps_max) - m.hysteresis_slope * (eps_max - eps);
  unload = std::min(load, std::max(unload, kFoamResidualFraction * m.initial_modulus() * eps));
  const double w = std::clamp(h.loading + (eps - h.strain) / kFoamTransitionStrain, 0.0, 1.0);
  if (next) *next = {eps_max, eps, w};
  return unload + w * (load - unload);
}

inline FoamHistory foam_stress_history(const FoamMaterial& m, const FoamHistory& h, double eps) {
  FoamHistory next;
  foam_stress(m, h, eps, &next);
  return next;
}

// ---------------------------------------------------------------- mesh

using Tet = std::array<int, 4>;

struct FoamMesh {
  std::vector<Vec3> nodes;
  std::vector<Tet> tets;
  std::vector<int> fixed_nodes;

  double element_volume(std::size_t e) const {
    const auto& t = tets[e];
    Mat3 d;
    d << nodes[t[1]] - nodes[t[0]], nodes[t[2]] - nodes[t[0]], nodes[t[3]] - nodes[t[0]];
    return d.determinant() / 6.0;
  }
  double volume() const {
    double v = 0.0;
    for (std::size_t e = 0; e < tets.size(); ++e) v += element_volume(e);
    return v;
  }

  /// Connected components of the element graph.
  std::size_t block_count() const {
    std::vector<int> parent(nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    std::vector<char> used(nodes.size(), 0);
    for (const auto& t : tets)
      for (int k = 0; k < 4; ++k) {
        used[t[k]] = 1;
        parent[find(t[k])] = find(t[0]);
      }
    std::size_t n = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (used[i] && find(static_cast<int>(i)) == static_cast<int>(i)) ++n;
    return n;
  }

  void validate(std::size_t blocks = 2) const {
    if (tets.empty()) throw ValidationError("foam.mesh", "no elements");
    for (std::size_t e = 0; e < tets.size(); ++e) {
      for (int k : tets[e])
        if (k < 0 || k >= static_cast<int>(nodes.size())) throw ElementError(e, "node index out of range");
      if (!(element_volume(e) > 0.0)) throw ElementError(e, "non-positive reference volume");
    }
    if (fixed_nodes.empty()) throw ValidationError("foam.mesh", "no fixed nodes");
    for (int i : fixed_nodes)
      if (i < 0 || i >= static_cast<int>(nodes.size())) throw ValidationError("foam.mesh", "fixed node out of range");
    if (blocks && block_count() != blocks)
      throw ValidationError("foam.mesh", "expected " + std::to_string(blocks) + " disjoint blocks, found " +
                                             std::to_string(block_count()));
  }
};

/// Box [lo, hi] split into nx*ny*nz hexahedra of five tetrahedra each, with
/// alternating orientation so faces match. Nodes on the x = lo.x face are fixed.
inline FoamMesh block_mesh(const Vec3& lo, const Vec3& hi, int nx, int ny, int nz) {
  if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("foam.mesh", "block divisions must be >= 1");
  FoamMesh m;
  auto id = [&](int i, int j, int k) { return (k * (ny + 1) + j) * (nx + 1) + i; };
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        const Vec3 t(double(i) / nx, double(j) / ny, double(k) / nz);
        m.nodes.push_back(lo + (hi - lo).cwiseProduct(t));
        if (i == 0) m.fixed_nodes.push_back(id(i, j, k));
      }
  static constexpr int even[5][4] = {{1, 2, 4, 7}, {0, 1, 2, 4}, {3, 1, 2, 7}, {5, 1, 4, 7}, {6, 2, 4, 7}};
  static constexpr int odd[5][4] = {{0, 3, 5, 6}, {1, 0, 3, 5}, {2, 0, 3, 6}, {4, 0, 5, 6}, {7, 3, 5, 6}};
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        int c[8];
        for (int b = 0; b < 8; ++b) c[b] = id(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
        const auto& split = ((i + j + k) % 2 == 0) ? even : odd;
        for (const auto& s : split) {
          Tet t{c[s[0]], c[s[1]], c[s[2]], c[s[3]]};
          m.tets.push_back(t);
          if (m.element_volume(m.tets.size() - 1) < 0.0) std::swap(m.tets.back()[2], m.tets.back()[3]);
        }
      }
  return m;
}

inline void append_mesh(FoamMesh& into, const FoamMesh& other) {
  const int offset = static_cast<int>(into.nodes.size());
  into.nodes.insert(into.nodes.end(), other.nodes.begin(), other.nodes.end());
  for (auto t : other.tets) {
    for (int& k : t) k += offset;
    into.tets.push_back(t);
  }
  for (int i : other.fixed_nodes) into.fixed_nodes.push_back(i + offset);
}

/// Replaces element `e` by four around its centroid (count +3, faces unchanged).
inline void split_element(FoamMesh& m, std::size_t e) {
  const Tet t = m.tets.at(e);
  const int c = static_cast<int>(m.nodes.size());
  m.nodes.push_back(0.25 * (m.nodes[t[0]] + m.nodes[t[1]] + m.nodes[t[2]] + m.nodes[t[3]]));
  m.tets[e] = {c, t[1], t[2], t[3]};
  m.tets.push_back({t[0], c, t[2], t[3]});
  m.tets.push_back({t[0], t[1], c, t[3]});
  m.tets.push_back({t[0], t[1], t[2], c});
}

/// Block layout in the backrest frame: x along the backrest normal (front face
/// at 0, bonded rear face at -thickness), y lateral, z up the backrest from the
/// seat crease.
struct FoamLayout {
  double thickness = 0.12;
  double width = 0.40;
  double lumbar_height = 0.20;
  double thoracic_height = 0.25;
  double lift = 0.03;  // crease to bottom of the lumbar block
  double gap = 0.005;  // between the blocks

  bool operator==(const FoamLayout&) const = default;
};

/// "default": 2x5x3 hexahedra per block (300 elements). "fine": 1523
/// elements from 2x8x8 + 2x8x11 hexahedra with one element split.
inline FoamMesh preset_mesh(const std::string& name, const FoamLayout& l = {}) {
  std::array<int, 3> lumbar, thoracic;
  if (name == "default") {
    lumbar = {2, 5, 3};
    thoracic = {2, 5, 3};
  } else if (name == "fine") {
    lumbar = {2, 8, 8};
    thoracic = {2, 8, 11};
  } else {
    throw ConfigError("foam.mesh", "unknown preset '" + name + "'");
  }
  const double z1 = l.lift + l.lumbar_height;
  FoamMesh m = block_mesh(Vec3(-l.thickness, -0.5 * l.width, l.lift), Vec3(0.0, 0.5 * l.width, z1), lumbar[0],
                          lumbar[1], lumbar[2]);
  append_mesh(m, block_mesh(Vec3(-l.thickness, -0.5 * l.width, z1 + l.gap),
                            Vec3(0.0, 0.5 * l.width, z1 + l.gap + l.thoracic_height), thoracic[0], thoracic[1],
                            thoracic[2]));
  if (name == "fine") split_element(m, m.tets.size() / 2);
  return m;
}

/// Plain text: "nodes N" + N lines "x y z", "tets M" + M lines "a b c d"
/// (0-based), "fixed K" + K lines of node indices. '#' starts a comment.
inline FoamMesh load_foam_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("foam.mesh", "cannot open " + path);
  std::stringstream body;
  std::string line;
  while (std::getline(in, line)) body << line.substr(0, line.find('#')) << '\n';
  FoamMesh m;
  std::string word;
  std::size_t count = 0;
  auto expect = [&](const char* section) {
    if (!(body >> word >> count) || word != section)
      throw ConfigError("foam.mesh", path + ": expected section '" + section + "'");
  };
  expect("nodes");
  m.nodes.resize(count);
  for (auto& p : m.nodes)
    if (!(body >> p.x() >> p.y() >> p.z())) throw ConfigError("foam.mesh", path + ": truncated node list");
  expect("tets");
  m.tets.resize(count);
  for (auto& t : m.tets)
    if (!(body >> t[0] >> t[1] >> t[2] >> t[3])) throw ConfigError("foam.mesh", path + ": truncated tet list");
  expect("fixed");
  m.fixed_nodes.resize(count);
  for (int& i : m.fixed_nodes)
    if (!(body >> i)) throw ConfigError("foam.mesh", path + ": truncated fixed-node list");
  return m;
}

inline void save_foam_mesh(const std::string& path, const FoamMesh& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("foam.mesh", "cannot write " + path);
  out.precision(17);
  out << "nodes " << m.nodes.size() << '\n';
  for (const auto& p : m.nodes) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  out << "tets " << m.tets.size() << '\n';
  for (const auto& t : m.tets) out << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "fixed " << m.fixed_nodes.size() << '\n';
  for (int i : m.fixed_nodes) out << i << '\n';
}

/// Maps layout coordinates into the seat frame: x -> backrest normal,
/// y -> backrest tangent, z -> up the backrest starting at the seat crease.
inline void place_on_backrest(FoamMesh& m, const SeatGeometry& g) {
  const PlaneSurface& b = g.backrest;
  const Vec3 up = b.bitangent();
  const double along = g.pan.normal.dot(up);
  const double h = std::abs(along) > 1e-9 ? -g.pan.signed_distance(b.point) / along : 0.0;
  const Vec3 crease = b.point + h * up;
  Mat3 axes;
  axes << b.normal, b.tangent, up;
  for (auto& p : m.nodes) p = crease + axes * p;
}

// ---------------------------------------------------------------- model

struct FoamState {
  std::vector<Vec3> x;  // seat frame
  std::vector<Vec3> v;
  std::vector<FoamHistory> history;  // per element, committed
};

/// Mesh plus everything derived from it once: shape gradients, lumped
/// masses, boundary nodes and the explicit stability limit.
class FoamModel {
 public:
  FoamModel(FoamMesh mesh, FoamMaterial material, std::size_t blocks = 2)
      : mesh_(std::move(mesh)), material_(std::move(material)) {
    material_.validate();
    mesh_.validate(blocks);
    const std::size_t n = mesh_.nodes.size();
    mass_.assign(n, 0.0);
    fixed_.assign(n, 0);
    for (int i : mesh_.fixed_nodes) fixed_[i] = 1;
    for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
      const auto& t = mesh_.tets[e];
      Mat3 dm;
      dm << mesh_.nodes[t[1]] - mesh_.nodes[t[0]], mesh_.nodes[t[2]] - mesh_.nodes[t[0]],
          mesh_.nodes[t[3]] - mesh_.nodes[t[0]];
      dm_inv_.push_back(dm.inverse());
      volume_.push_back(dm.determinant() / 6.0);
      for (int k : t) mass_[k] += material_.density * volume_.back() / 4.0;
    }
    find_surface();
    stability();
  }

  const FoamMesh& mesh() const { return mesh_; }
  const FoamMaterial& material() const { return material_; }
  const std::vector<double>& node_mass() const { return mass_; }
  double total_mass() const { return std::accumulate(mass_.begin(), mass_.end(), 0.0); }
  bool fixed(std::size_t node) const { return fixed_[node] != 0; }
  const std::vector<int>& surface_nodes() const { return surface_; }
  const Mat3& dm_inv(std::size_t e) const { return dm_inv_[e]; }
  double rest_volume(std::size_t e) const { return volume_[e]; }
  /// Highest natural frequency bound (Gershgorin, steepest curve slope).
  double omega_max() const { return omega_max_; }
  /// Stiffness-proportional damping coefficient: ratio `damping_ratio` at omega_max.
  double beta() const { return 2.0 * material_.damping_ratio / omega_max_; }
  /// Explicit limit 2/w (sqrt(1 + z^2) - z) with a 0.9 safety factor.
  double stable_dt() const {
    const double z = material_.damping_ratio;
    return 0.9 * 2.0 / omega_max_ * (std::sqrt(1.0 + z * z) - z);
  }

  FoamState rest_state() const {
    FoamState s;
    s.x = mesh_.nodes;
    s.v.assign(mesh_.nodes.size(), Vec3::Zero());
    s.history.assign(mesh_.tets.size(), FoamHistory{});
    return s;
  }

  /// Gradients of the four linear shape functions.
  std::array<Vec3, 4> gradients(std::size_t e) const {
    const Mat3 g = dm_inv_[e].transpose();
    return {-(g.col(0) + g.col(1) + g.col(2)), g.col(0), g.col(1), g.col(2)};
  }

 private:
  void find_surface() {
    std::map<std::array<int, 3>, int> faces;
    for (const auto& t : mesh_.tets)
      for (int skip = 0; skip < 4; ++skip) {
        std::array<int, 3> f;
        int j = 0;
        for (int k = 0; k < 4; ++k)
          if (k != skip) f[j++] = t[k];
        std::sort(f.begin(), f.end());
        ++faces[f];
      }
    std::vector<char> on(mesh_.nodes.size(), 0);
    for (const auto& [f, count] : faces)
      if (count == 1)
        for (int k : f) on[k] = 1;
    for (std::size_t i = 0; i < on.size(); ++i)
      if (on[i] && !fixed_[i]) surface_.push_back(static_cast<int>(i));
  }

  // K_ab = V E/2 ((g_a.g_b) I + g_b g_a^T) for the isotropic law sigma = E eps.
  void stability() {
    const double e_max = material_.max_tangent_modulus();
    std::vector<double> row(mesh_.nodes.size(), 0.0);
    for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
      const auto g = gradients(e);
      for (int a = 0; a < 4; ++a) {
        Vec3 sum = Vec3::Zero();
        for (int b = 0; b < 4; ++b) {
          const Mat3 k = 0.5 * volume_[e] * e_max * (g[a].dot(g[b]) * Mat3::Identity() + g[b] * g[a].transpose());
          sum += k.cwiseAbs().rowwise().sum();
        }
        row[mesh_.tets[e][a]] += sum.maxCoeff();
      }
    }
    omega_max_ = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (!fixed_[i]) omega_max_ = std::max(omega_max_, std::sqrt(row[i] / mass_[i]));
    if (!(omega_max_ > 0.0)) throw ValidationError("foam.mesh", "no free nodes");
  }

  FoamMesh mesh_;
  FoamMaterial material_;
  std::vector<Mat3> dm_inv_;
  std::vector<double> volume_;
  std::vector<double> mass_;
  std::vector<char> fixed_;
  std::vector<int> surface_;
  double omega_max_ = 0.0;
};

inline std::vector<Vec3> foam_world_positions(const FoamState& s, const Vec3& seat_displacement) {
  std::vector<Vec3> out(s.x.size());
  for (std::size_t i = 0; i < s.x.size(); ++i) out[i] = s.x[i] + seat_displacement;
  return out;
}

inline double foam_kinetic_energy(const FoamModel& model, const FoamState& s) {
  double t = 0.0;
  for (std::size_t i = 0; i < s.v.size(); ++i) t += 0.5 * model.node_mass()[i] * s.v[i].squaredNorm();
  return t;
}

/// Rotation and stretch of F = R S, principal compressive strain and the
/// element history it implies.
struct ElementStrain {
  Mat3 rotation = Mat3::Identity();
  Mat3 strain = Mat3::Zero();  // S - I
  double compressive = 0.0;
};

inline ElementStrain corotated_strain(const Mat3& f, std::size_t e) {
  if (!(f.determinant() > 0.0)) throw ElementError(e, "inverted (volume <= 0)");
  Eigen::SelfAdjointEigenSolver<Mat3> eig;
  eig.computeDirect(f.transpose() * f);
  const Vec3 stretch = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Mat3& v = eig.eigenvectors();
  ElementStrain out;
  const Mat3 s = v * stretch.asDiagonal() * v.transpose();
  out.rotation = f * v * stretch.cwiseInverse().asDiagonal() * v.transpose();
  out.strain = s - Mat3::Identity();
  out.compressive = std::max(0.0, 1.0 - stretch.minCoeff());  // eigenvalues ascend
  return out;
}

/// Internal (elastic + damping) nodal forces. Each element uses the secant
/// modulus of its hysteretic stress at the principal compressive strain;
/// tension uses the initial modulus. `trial` receives the history the
/// current strains imply.
inline std::vector<Vec3> element_forces(const FoamModel& model, const FoamState& s,
                                        std::vector<FoamHistory>* trial = nullptr) {
  const auto& mesh = model.mesh();
  const auto& mat = model.material();
  std::vector<Vec3> f(s.x.size(), Vec3::Zero());
  if (trial) trial->resize(mesh.tets.size());
  const double e0 = mat.initial_modulus();
  const double beta = model.beta();
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& t = mesh.tets[e];
    const auto& x0 = mesh.nodes;
    Mat3 du, vs;
    for (int k = 0; k < 3; ++k) {
      du.col(k) = (s.x[t[k + 1]] - x0[t[k + 1]]) - (s.x[t[0]] - x0[t[0]]);
      vs.col(k) = s.v[t[k + 1]] - s.v[t[0]];
    }
    if (du.isZero(0.0) && vs.isZero(0.0)) {  // exactly at rest
      if (trial) (*trial)[e] = foam_stress_history(mat, s.history[e], 0.0);
      continue;
    }
    const Mat3 def = Mat3::Identity() + du * model.dm_inv(e);
    const ElementStrain es = corotated_strain(def, e);
    FoamHistory next;
    double modulus = e0;
    const double sigma = foam_stress(mat, s.history[e], es.compressive, &next);
    if (es.compressive > 1e-12) modulus = sigma / es.compressive;
    if (trial) (*trial)[e] = next;
    const Mat3 rate = es.rotation.transpose() * vs * model.dm_inv(e);
    const Mat3 stress = modulus * (es.strain + beta * 0.5 * (rate + rate.transpose()));
    const Mat3 p = es.rotation * stress;
    const auto g = model.gradients(e);
    for (int a = 0; a < 4; ++a) f[t[a]] -= model.rest_volume(e) * p * g[a];
  }
  return f;
}

// ---------------------------------------------------------------- contact

struct FoamContactBody {
  std::size_t segment = 0;
  WorldEllipsoid ellipsoid;
  Vec3 velocity = Vec3::Zero();  // at the centre
  Vec3 angular_velocity = Vec3::Zero();
};

struct NodeContact {
  int node = 0;
  std::size_t segment = 0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();  // ellipsoid outward normal
  double depth = 0.0;
  double normal_force = 0.0;
  Vec3 force = Vec3::Zero();  // on the node
  Vec3 friction = Vec3::Zero();
  Mat3 stiffness = Mat3::Zero();  // -dF/dx_node
  Mat3 damping = Mat3::Zero();    // -dF/dv_node
};

struct FoamContactResult {
  std::vector<NodeContact> nodes;
  ExternalForces body;

  Vec3 nodal_sum() const {
    Vec3 f = Vec3::Zero();
    for (const auto& c : nodes) f += c.force;
    return f;
  }
};

/// Surface nodes inside an ellipsoid are pushed out along its outward normal.
/// Depth is measured along the ray from the centre (exact for spheres).
/// The body receives the opposite force at the node position.
inline FoamContactResult foam_contact(const FoamModel& model, const FoamState& s,
                                      const std::vector<FoamContactBody>& bodies, const NormalContactLaw& law,
                                      const FrictionLaw& friction, std::size_t segment_count) {
  FoamContactResult out;
  out.body.reset(segment_count);
  for (const auto& b : bodies) {
    const WorldEllipsoid& el = b.ellipsoid;
    const double reach = el.semi_axes.maxCoeff();
    const Vec3 inv2 = el.semi_axes.cwiseProduct(el.semi_axes).cwiseInverse();
    for (int i : model.surface_nodes()) {
      const Vec3 p = s.x[i];
      if ((p - el.center).squaredNorm() >= reach * reach) continue;
      const Vec3 y = el.rotation.transpose() * (p - el.center);
      const double r = y.cwiseQuotient(el.semi_axes).norm();
      if (r >= 1.0) continue;
      NodeContact c;
      c.node = i;
      c.segment = b.segment;
      c.point = p;
      if (r < 1e-9) {
        c.normal = el.rotation.col(0);
        c.depth = el.semi_axes.minCoeff();
      } else {
        c.normal = (el.rotation * y.cwiseProduct(inv2)).normalized();
        c.depth = (1.0 / r - 1.0) * y.norm();
      }
      const Vec3 v_rel = s.v[i] - (b.velocity + b.angular_velocity.cross(p - el.center));
      const double rate = -v_rel.dot(c.normal);
      c.normal_force = law.force(c.depth, rate);
      const Vec3 v_t = v_rel - v_rel.dot(c.normal) * c.normal;
      c.friction = friction_force(c.normal_force, v_t, friction);
      c.force = c.normal_force * c.normal + c.friction;
      const Mat3 nn = c.normal * c.normal.transpose();
      c.stiffness = law.stiffness(c.depth, rate) * nn;
      c.damping = law.damping(c.depth, rate) * nn + friction_damping(c.normal_force, v_t, c.normal, friction);
      if (c.normal_force <= 0.0 && c.friction.isZero()) continue;
      out.body.add_force(b.segment, p, -c.force);
      out.nodes.push_back(c);
    }
  }
  return out;
}

/// One explicit step of the free nodes (semi-implicit Euler). Contact
/// stiffness and damping in `contacts` are taken implicitly per node; the
/// 3x3 solve keeps stiff penalties stable without touching the elastic
/// forces. `gravity` is the effective gravity in the seat frame.
inline void step_foam(const FoamModel& model, FoamState& s, const std::vector<NodeContact>& contacts,
                      const Vec3& gravity, double dt) {
  if (!(dt > 0.0)) throw ConfigError("foam.dt", "must be > 0");
  if (dt > model.stable_dt())
    throw ConfigError("foam.dt", "dt = " + std::to_string(dt) + " s exceeds the stable step; requires dt <= " +
                                     std::to_string(model.stable_dt()) + " s");
  std::vector<FoamHistory> trial;
  std::vector<Vec3> f = element_forces(model, s, &trial);
  const std::size_t n = s.x.size();
  std::vector<Mat3> k(n, Mat3::Zero()), d(n, Mat3::Zero());
  for (const auto& c : contacts) {
    f[c.node] += c.force;
    k[c.node] += c.stiffness;
    d[c.node] += c.damping;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (model.fixed(i)) continue;
    const double m = model.node_mass()[i];
    const Vec3 rhs = m * s.v[i] + dt * (f[i] + m * gravity) + dt * d[i] * s.v[i];
    const Mat3 a = m * Mat3::Identity() + dt * d[i] + dt * dt * k[i];
    s.v[i] = a.ldlt().solve(rhs);
    s.x[i] += dt * s.v[i];
  }
  s.history = std::move(trial);
  for (std::size_t i = 0; i < n; ++i)
    if (!s.x[i].allFinite()) throw DivergenceError(0.0, "foam node " + std::to_string(i));
}

// ---------------------------------------------------------------- backrest

struct FoamConfig {
  std::string mesh = "default";  // preset name or mesh file path
  std::string material;          // empty: shipped default curve
  double mu = 1.2;
  double k_contact = 2.0e4;  // N/m per node
  double c_contact = 20.0;   // N s/m per node
  double damping_ratio = -1.0;  // < 0: keep the material file value
  int max_substeps = 64;
  FoamLayout layout;

  bool operator==(const FoamConfig&) const = default;

  void validate() const {
    if (!(mu >= 0.0)) throw ValidationError("foam.mu", "must be >= 0");
    if (!(k_contact > 0.0)) throw ValidationError("foam.k_contact", "must be > 0");
    if (!(c_contact >= 0.0)) throw ValidationError("foam.c_contact", "must be >= 0");
    if (max_substeps < 1) throw ValidationError("foam.max_substeps", "must be >= 1");
    if (!(layout.thickness > 0.0 && layout.width > 0.0 && layout.lumbar_height > 0.0 &&
          layout.thoracic_height > 0.0 && layout.gap > 0.0))
      throw ValidationError("foam.layout", "dimensions must be > 0");
  }

  NormalContactLaw node_law() const { return {k_contact, 1.0, c_contact, false}; }

  FoamMesh build_mesh() const {
    if (mesh == "default" || mesh == "fine") return preset_mesh(mesh, layout);
    return load_foam_mesh(mesh);
  }
  FoamMaterial build_material() const {
    FoamMaterial m = load_foam_material(material.empty() ? default_foam_material_path() : material);
    if (damping_ratio >= 0.0) m.damping_ratio = damping_ratio;
    return m;
  }
};

/// Foam backrest coupled to the body by staggered steps: the body sees the
/// foam contact of the current foam state, then the foam subcycles over the
/// body step against the body's new pose.
class FoamBackrest : public DeformableBackrest {
 public:
  FoamBackrest(FoamModel model, const FoamConfig& cfg, std::vector<std::size_t> segments, double v_reg, double dt)
      : model_(std::move(model)), cfg_(cfg), segments_(std::move(segments)), state_(model_.rest_state()) {
    friction_.mu = cfg.mu;
    friction_.v_reg = v_reg;
    friction_.validate("foam");
    law_ = cfg.node_law();
    substeps_ = static_cast<int>(std::ceil(dt / model_.stable_dt() - 1e-12));
    substeps_ = std::max(substeps_, 1);
    if (substeps_ > cfg.max_substeps)
      throw ConfigError("foam.max_substeps", "explicit foam needs dt <= " + std::to_string(model_.stable_dt()) +
                                                 " s; " + std::to_string(substeps_) + " substeps required");
  }

  void add_contact(const Multibody& mb, const Kinematics& kin, ContactOutput& out) override {
    const FoamContactResult res = contact(mb, kin);
    for (const auto& c : res.nodes) {
      out.ext.add_force(c.segment, c.point, -c.force);
      out.impedances.push_back({c.segment, c.point, c.damping, c.stiffness});
      NormalContact nc;
      nc.active = true;
      nc.point = c.point;
      nc.normal = -c.normal;
      nc.depth = c.depth;
      nc.force = c.normal_force;
      out.contacts.push_back({"foam", c.segment, nc, -c.friction, friction_.mu});
    }
  }

  /// Advances the foam over one body step with the body held at `kin`.
  void advance(const Multibody& mb, const Kinematics& kin, const Vec3& gravity, double dt) {
    const double h = dt / substeps_;
    const auto bodies = contact_bodies(mb, kin);
    for (int k = 0; k < substeps_; ++k) {
      const auto res = foam_contact(model_, state_, bodies, law_, friction_, mb.model().segments.size());
      step_foam(model_, state_, res.nodes, gravity, h);
    }
  }

  FoamContactResult contact(const Multibody& mb, const Kinematics& kin) const {
    return foam_contact(model_, state_, contact_bodies(mb, kin), law_, friction_, mb.model().segments.size());
  }

  const FoamModel& model() const { return model_; }
  const FoamState& state() const { return state_; }
  FoamState& state() { return state_; }
  int substeps() const { return substeps_; }

 private:
  std::vector<FoamContactBody> contact_bodies(const Multibody& mb, const Kinematics& kin) const {
    std::vector<FoamContactBody> out;
    for (std::size_t seg : segments_) {
      const int b = mb.body_of_segment(seg);
      FoamContactBody fb;
      fb.segment = seg;
      fb.ellipsoid = world_ellipsoid(mb, kin, seg);
      fb.velocity = kin.point_velocity(b, fb.ellipsoid.center);
      fb.angular_velocity = kin.angular_velocity(b);
      out.push_back(fb);
    }
    return out;
  }

  FoamModel model_;
  FoamConfig cfg_;
  std::vector<std::size_t> segments_;
  FoamState state_;
  NormalContactLaw law_;
  FrictionLaw friction_;
  int substeps_ = 1;
};

/// Foam backrest for `cfg` placed on the seat's backrest plane.
inline FoamBackrest make_foam_backrest(const FoamConfig& cfg, const ContactConfig& contact, const SeatGeometry& g,
                                       const Multibody& mb, double dt) {
  cfg.validate();
  FoamMesh mesh = cfg.build_mesh();
  place_on_backrest(mesh, g);
  std::vector<std::size_t> segs;
  for (const auto& s : contact.backrest_segments) segs.push_back(*mb.model().segment_index(s));
  return FoamBackrest(FoamModel(std::move(mesh), cfg.build_material()), cfg, std::move(segs), contact.v_reg, dt);
}

}  // namespace seatsim
