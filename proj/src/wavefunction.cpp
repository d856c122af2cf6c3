#include "hbdm/wavefunction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hbdm/error.hpp"

namespace hbdm {

namespace {

const Complex kI{0.0, 1.0};

Eigen::Matrix2cd pauli(int i) {
  Eigen::Matrix2cd m;
  switch (i) {
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, -kI, kI, 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

Eigen::MatrixXcd block(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b,
                       const Eigen::Matrix2cd& c, const Eigen::Matrix2cd& d) {
  Eigen::MatrixXcd m(4, 4);
  m.topLeftCorner<2, 2>() = a;
  m.topRightCorner<2, 2>() = b;
  m.bottomLeftCorner<2, 2>() = c;
  m.bottomRightCorner<2, 2>() = d;
  return m;
}

int int_pow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

DiracRepresentation::DiracRepresentation(std::string name, int spatial_dim,
                                         std::vector<Eigen::MatrixXcd> gamma)
    : name_(std::move(name)), spatial_dim_(spatial_dim), gamma_(std::move(gamma)) {
  for (const auto& g : gamma_) current_.push_back(gamma_[0] * g);
}

DiracRepresentation DiracRepresentation::standard(int spatial_dim) {
  if (spatial_dim == 1) {
    return DiracRepresentation("dirac", 1, {pauli(3), kI * pauli(2)});
  }
  if (spatial_dim == 3) {
    const Eigen::Matrix2cd one = Eigen::Matrix2cd::Identity();
    const Eigen::Matrix2cd zero = Eigen::Matrix2cd::Zero();
    std::vector<Eigen::MatrixXcd> g{block(one, zero, zero, -one)};
    for (int i = 1; i <= 3; ++i) g.push_back(block(zero, pauli(i), -pauli(i), zero));
    return DiracRepresentation("dirac", 3, std::move(g));
  }
  throw Error(ErrorCode::Unsupported, "Dirac matrices are provided for d = 1 and d = 3");
}

DiracRepresentation DiracRepresentation::chiral(int spatial_dim) {
  if (spatial_dim == 1) {
    return DiracRepresentation("chiral", 1, {pauli(1), kI * pauli(2)});
  }
  if (spatial_dim == 3) {
    const Eigen::Matrix2cd one = Eigen::Matrix2cd::Identity();
    const Eigen::Matrix2cd zero = Eigen::Matrix2cd::Zero();
    std::vector<Eigen::MatrixXcd> g{block(zero, one, one, zero)};
    for (int i = 1; i <= 3; ++i) g.push_back(block(zero, pauli(i), -pauli(i), zero));
    return DiracRepresentation("chiral", 3, std::move(g));
  }
  throw Error(ErrorCode::Unsupported, "Dirac matrices are provided for d = 1 and d = 3");
}

DiracRepresentation DiracRepresentation::by_name(std::string_view name, int spatial_dim) {
  if (name == "dirac" || name == "standard") return standard(spatial_dim);
  if (name == "chiral" || name == "weyl") return chiral(spatial_dim);
  throw Error(ErrorCode::ConfigError, "unknown representation '" + std::string(name) + "'");
}

DiracRepresentation DiracRepresentation::transformed(const Eigen::MatrixXcd& unitary,
                                                     std::string name) const {
  std::vector<Eigen::MatrixXcd> g;
  for (const auto& m : gamma_) g.push_back(unitary * m * unitary.adjoint());
  return DiracRepresentation(std::move(name), spatial_dim_, std::move(g));
}

double DiracRepresentation::clifford_residual() const {
  const auto n = spinor_dim();
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(n, n);
  double worst = 0.0;
  for (std::size_t mu = 0; mu < gamma_.size(); ++mu) {
    for (std::size_t nu = 0; nu < gamma_.size(); ++nu) {
      const double eta = mu != nu ? 0.0 : (mu == 0 ? 2.0 : -2.0);
      const Eigen::MatrixXcd r = gamma_[mu] * gamma_[nu] + gamma_[nu] * gamma_[mu] - eta * id;
      worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double DiracRepresentation::hermiticity_residual() const {
  double worst = (gamma_[0] - gamma_[0].adjoint()).cwiseAbs().maxCoeff();
  for (const auto& g : gamma_) {
    worst = std::max(worst, (gamma_[0] * g * gamma_[0] - g.adjoint()).cwiseAbs().maxCoeff());
  }
  return worst;
}

// ------------------------------------------------------------ plane waves

namespace {

double mode_energy(int spatial_dim, double mass, const PlaneWaveMode& mode) {
  double k2 = 0.0;
  for (int i = 0; i < spatial_dim; ++i) k2 += mode.k[static_cast<std::size_t>(i)] * mode.k[static_cast<std::size_t>(i)];
  return (mode.energy_sign >= 0 ? 1.0 : -1.0) * std::sqrt(k2 + mass * mass);
}

Eigen::MatrixXcd slashed_momentum(const DiracRepresentation& rep, double energy,
                                  const PlaneWaveMode& mode) {
  Eigen::MatrixXcd p = rep.gamma(0) * energy;
  for (int i = 1; i <= rep.spatial_dim(); ++i) p -= rep.gamma(i) * mode.k[static_cast<std::size_t>(i - 1)];
  return p;
}

}  // namespace

Spinor plane_wave_spinor(const DiracRepresentation& rep, double mass, const PlaneWaveMode& mode) {
  const double energy = mode_energy(rep.spatial_dim(), mass, mode);
  if (energy == 0.0) {
    throw Error(ErrorCode::Unsupported, "zero-energy mode (m = 0 and k = 0)");
  }
  const int n = rep.spinor_dim();
  // (p-slash + m) maps onto the solution space of (p-slash - m) u = 0.
  const Eigen::MatrixXcd proj =
      slashed_momentum(rep, energy, mode) + mass * Eigen::MatrixXcd::Identity(n, n);
  std::vector<Spinor> basis;
  for (int c = 0; c < n && static_cast<int>(basis.size()) < n / 2; ++c) {
    Spinor v = proj.col(c);
    for (const auto& b : basis) v -= b * b.dot(v);
    const double norm = v.norm();
    if (norm > 1e-8 * (std::abs(energy) + mass)) basis.push_back(v / norm);
  }
  const auto spin = static_cast<std::size_t>(std::clamp(mode.spin, 0, static_cast<int>(basis.size()) - 1));
  return basis.at(spin);
}

double momentum_space_residual(const DiracRepresentation& rep, double mass,
                               const PlaneWaveMode& mode, const Spinor& u) {
  const double energy = mode_energy(rep.spatial_dim(), mass, mode);
  const Spinor r = slashed_momentum(rep, energy, mode) * u - mass * u;
  return r.cwiseAbs().maxCoeff();
}

ParticleState::ParticleState(const DiracRepresentation& rep, double mass,
                             std::vector<PlaneWaveMode> modes)
    : spatial_dim_(rep.spatial_dim()), modes_(std::move(modes)) {
  for (const auto& m : modes_) {
    energy_.push_back(mode_energy(spatial_dim_, mass, m));
    spinor_.push_back(plane_wave_spinor(rep, mass, m) * m.amplitude);
  }
}

Spinor ParticleState::evaluate(const MinkowskiPoint& x) const {
  Spinor out = Spinor::Zero(spinor_.empty() ? 0 : spinor_.front().size());
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    double kx = 0.0;
    for (int a = 0; a < spatial_dim_; ++a) {
      const auto ia = static_cast<std::size_t>(a);
      kx += modes_[i].k[ia] * x.x[ia];
    }
    const double phase = kx - energy_[i] * x.t;
    out += spinor_[i] * Complex(std::cos(phase), std::sin(phase));
  }
  return out;
}

std::vector<PlaneWaveMode> gaussian_packet_modes(double center, double momentum, double width,
                                                 double period, int energy_sign, double cutoff) {
  const double dk = 2.0 * std::numbers::pi / period;
  const double sigma_k = 1.0 / width;
  const auto n_lo = static_cast<long>(std::ceil((momentum - cutoff * sigma_k) / dk));
  const auto n_hi = static_cast<long>(std::floor((momentum + cutoff * sigma_k) / dk));
  std::vector<PlaneWaveMode> modes;
  for (long n = n_lo; n <= n_hi; ++n) {
    PlaneWaveMode m;
    const double k = dk * static_cast<double>(n);
    m.k = {k, 0.0, 0.0};
    m.energy_sign = energy_sign;
    const double w = std::exp(-0.5 * (k - momentum) * (k - momentum) * width * width);
    m.amplitude = w * Complex(std::cos(-k * center), std::sin(-k * center));
    modes.push_back(m);
  }
  return modes;
}

// ---------------------------------------------------------- multi-time psi

MultiTimeWaveFunction::MultiTimeWaveFunction(DiracRepresentation rep, std::vector<double> masses,
                                             std::vector<ProductTerm> terms)
    : rep_(std::move(rep)), masses_(std::move(masses)), terms_(std::move(terms)) {
  if (masses_.empty()) throw Error(ErrorCode::ConfigError, "wave function needs >= 1 particle");
  components_ = int_pow(rep_.spinor_dim(), particle_count());
  for (const auto& term : terms_) {
    if (term.particles.size() != masses_.size()) {
      throw Error(ErrorCode::ConfigError, "every term needs one factor per particle");
    }
    std::vector<ParticleState> factors;
    for (std::size_t j = 0; j < masses_.size(); ++j) {
      factors.emplace_back(rep_, masses_[j], term.particles[j]);
    }
    factors_.push_back(std::move(factors));
  }
}

Spinor MultiTimeWaveFunction::evaluate(std::span<const MinkowskiPoint> config) const {
  if (static_cast<int>(config.size()) != particle_count()) {
    throw Error(ErrorCode::OutOfDomain, "configuration size does not match particle count");
  }
  Spinor psi = Spinor::Zero(components_);
  const int n = spinor_dim();
  Spinor acc;
  for (std::size_t t = 0; t < factors_.size(); ++t) {
    acc = Spinor::Constant(1, terms_[t].coefficient);
    for (std::size_t j = 0; j < config.size(); ++j) {
      const Spinor phi = factors_[t][j].evaluate(config[j]);
      Spinor next(acc.size() * n);
      for (Eigen::Index a = 0; a < acc.size(); ++a) next.segment(a * n, n) = acc[a] * phi;
      acc = std::move(next);
    }
    psi += acc;
  }
  return psi;
}

// ------------------------------------------------------------ current tensor

std::size_t CurrentTensor::flat(std::span<const int> indices) const {
  std::size_t idx = 0;
  for (int mu : indices) idx = idx * static_cast<std::size_t>(base()) + static_cast<std::size_t>(mu);
  return idx;
}

double CurrentTensor::max_abs() const {
  double m = 0.0;
  for (double c : components) m = std::max(m, std::abs(c));
  return m;
}

std::array<double, 4> CurrentTensor::contract_except(
    std::span<const std::array<double, 4>> covectors, int free_slot) const {
  std::array<double, 4> out{};
  const int b = base();
  std::vector<int> idx(static_cast<std::size_t>(particles), 0);
  for (std::size_t flat_index = 0; flat_index < components.size(); ++flat_index) {
    std::size_t rem = flat_index;
    for (int j = particles - 1; j >= 0; --j) {
      idx[static_cast<std::size_t>(j)] = static_cast<int>(rem % static_cast<std::size_t>(b));
      rem /= static_cast<std::size_t>(b);
    }
    double w = components[flat_index];
    for (int j = 0; j < particles; ++j) {
      if (j == free_slot) continue;
      w *= covectors[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
    }
    out[static_cast<std::size_t>(idx[static_cast<std::size_t>(free_slot)])] += w;
  }
  return out;
}

double CurrentTensor::contract_all(std::span<const std::array<double, 4>> covectors) const {
  const auto v = contract_except(covectors, particles - 1);
  const auto& last = covectors[static_cast<std::size_t>(particles - 1)];
  double s = 0.0;
  for (int mu = 0; mu < base(); ++mu) s += v[static_cast<std::size_t>(mu)] * last[static_cast<std::size_t>(mu)];
  return s;
}

Spinor apply_to_slot(const Eigen::MatrixXcd& op, const Spinor& psi, int slot, int particles) {
  const auto n = op.rows();
  Eigen::Index stride = 1;
  for (int j = slot + 1; j < particles; ++j) stride *= n;
  const Eigen::Index outer = psi.size() / (stride * n);
  Spinor out(psi.size());
  for (Eigen::Index o = 0; o < outer; ++o) {
    for (Eigen::Index in = 0; in < stride; ++in) {
      const Eigen::Index base = o * stride * n + in;
      for (Eigen::Index r = 0; r < n; ++r) {
        Complex acc = 0.0;
        for (Eigen::Index c = 0; c < n; ++c) acc += op(r, c) * psi[base + c * stride];
        out[base + r * stride] = acc;
      }
    }
  }
  return out;
}

CurrentTensor current_tensor(const DiracRepresentation& rep, const Spinor& psi, int particles) {
  CurrentTensor T;
  T.particles = particles;
  T.spatial_dim = rep.spatial_dim();
  const int b = T.base();
  const int count = int_pow(b, particles);
  T.components.resize(static_cast<std::size_t>(count));
  const double scale = std::max(psi.squaredNorm(), 1e-300);
  std::vector<int> idx(static_cast<std::size_t>(particles), 0);
  for (int flat_index = 0; flat_index < count; ++flat_index) {
    int rem = flat_index;
    for (int j = particles - 1; j >= 0; --j) {
      idx[static_cast<std::size_t>(j)] = rem % b;
      rem /= b;
    }
    Spinor phi = psi;
    for (int j = 0; j < particles; ++j) {
      phi = apply_to_slot(rep.current_matrix(idx[static_cast<std::size_t>(j)]), phi, j, particles);
    }
    const Complex value = psi.dot(phi);
    if (std::abs(value.imag()) > 1e-10 * scale) {
      throw Error(ErrorCode::NonRealComponent, "current tensor component is not real");
    }
    T.components[static_cast<std::size_t>(flat_index)] = value.real();
  }
  return T;
}

CurrentTensor current_tensor(const MultiTimeWaveFunction& psi,
                             std::span<const MinkowskiPoint> config) {
  return current_tensor(psi.representation(), psi.evaluate(config), psi.particle_count());
}

std::vector<double> check_divergence(const CurrentField& field,
                                     std::span<const MinkowskiPoint> config, double h) {
  const CurrentTensor center = field(config);
  const int particles = center.particles;
  const int b = center.base();
  const double scale = std::max(center.max_abs(), 1e-300);
  std::vector<double> residual(static_cast<std::size_t>(particles), 0.0);
  std::vector<MinkowskiPoint> shifted(config.begin(), config.end());

  for (int j = 0; j < particles; ++j) {
    // div[k] accumulates sum_mu d_mu T^{..mu..} for each flat index of the
    // tensor with slot j collapsed (stored at the position where slot j = 0).
    std::vector<double> div(center.components.size(), 0.0);
    for (int mu = 0; mu < b; ++mu) {
      auto& p = shifted[static_cast<std::size_t>(j)];
      const MinkowskiPoint saved = p;
      double& coord = mu == 0 ? p.t : p.x[static_cast<std::size_t>(mu - 1)];
      coord += h;
      const CurrentTensor plus = field(shifted);
      coord -= 2.0 * h;
      const CurrentTensor minus = field(shifted);
      p = saved;

      std::size_t stride = 1;
      for (int k = j + 1; k < particles; ++k) stride *= static_cast<std::size_t>(b);
      for (std::size_t flat_index = 0; flat_index < div.size(); ++flat_index) {
        const auto slot_index = (flat_index / stride) % static_cast<std::size_t>(b);
        if (slot_index != 0) continue;
        const std::size_t with_mu = flat_index + static_cast<std::size_t>(mu) * stride;
        div[flat_index] += (plus.components[with_mu] - minus.components[with_mu]) / (2.0 * h);
      }
    }
    double worst = 0.0;
    for (double v : div) worst = std::max(worst, std::abs(v));
    residual[static_cast<std::size_t>(j)] = worst / scale;
  }
  return residual;
}

std::vector<double> check_divergence(const MultiTimeWaveFunction& psi,
                                     std::span<const MinkowskiPoint> config, double h) {
  return check_divergence(
      [&psi](std::span<const MinkowskiPoint> c) { return current_tensor(psi, c); }, config, h);
}

}  // namespace hbdm
