#include "stflow/graph.hpp"

#include <cmath>
#include <numbers>

#include "stflow/error.hpp"

namespace stflow::graph {

double haversine_km(double lat1, double lng1, double lat2, double lng2) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double phi1 = lat1 * kRad;
  const double phi2 = lat2 * kRad;
  const double s_lat = std::sin((lat2 - lat1) * kRad / 2.0);
  const double s_lng = std::sin((lng2 - lng1) * kRad / 2.0);
  const double a = s_lat * s_lat + std::cos(phi1) * std::cos(phi2) * s_lng * s_lng;
  return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(a), std::sqrt(std::max(0.0, 1.0 - a)));
}

DistanceMatrix distance_matrix(const ingest::StationRegistry& registry) {
  const std::size_t n = registry.size();
  DistanceMatrix out{SquareMatrix(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = registry[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& b = registry[j];
      const double d = haversine_km(a.latitude, a.longitude, b.latitude, b.longitude);
      out.d(i, j) = d;
      out.d(j, i) = d;
    }
  }
  return out;
}

double default_sigma_sq(const DistanceMatrix& dm) {
  const std::size_t n = dm.d.n;
  if (n < 2) return 1.0;
  // Two-pass over the upper triangle; the matrix is symmetric so the
  // statistics equal those over all off-diagonal entries.
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sum += dm.d(i, j);
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double e = dm.d(i, j) - mean;
      ss += e * e;
    }
  }
  const double var = ss / static_cast<double>(count);
  return var > 0.0 ? var : 1.0;
}

WeightedAdjacency gaussian_adjacency(const DistanceMatrix& dm, double sigma_sq, double epsilon) {
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
    throw ParameterError("sigma_sq must be positive, got " + std::to_string(sigma_sq));
  }
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw ParameterError("epsilon must lie in [0, 1), got " + std::to_string(epsilon));
  }
  const std::size_t n = dm.d.n;
  WeightedAdjacency out{SquareMatrix(n), sigma_sq, epsilon};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dm.d(i, j);
      const double w = std::exp(-(d * d) / sigma_sq);
      if (w >= epsilon) {
        out.w(i, j) = w;
        out.w(j, i) = w;
      }
    }
  }
  return out;
}

PropagationOperator normalize(const WeightedAdjacency& adj) {
  const std::size_t n = adj.w.n;
  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 1.0;
    for (double v : adj.w.row(i)) degree += v;
    inv_sqrt_degree[i] = 1.0 / std::sqrt(degree);
  }
  PropagationOperator out{SquareMatrix(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adj.w(i, j) + (i == j ? 1.0 : 0.0);
      if (a != 0.0) out.p(i, j) = inv_sqrt_degree[i] * a * inv_sqrt_degree[j];
    }
  }
  return out;
}

double spectral_radius(const SquareMatrix& m, int max_iterations, double tolerance) {
  const std::size_t n = m.n;
  if (n == 0) return 0.0;
  std::vector<double> v(n), next(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
  auto norm = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    return std::sqrt(s);
  };
  double scale = norm(v);
  for (double& e : v) e /= scale;
  double estimate = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const auto row = m.row(i);
      for (std::size_t j = 0; j < n; ++j) s += row[j] * v[j];
      next[i] = s;
    }
    const double len = norm(next);
    if (len == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = next[i] / len;
    const bool converged = std::abs(len - estimate) <= tolerance * std::max(1.0, len);
    estimate = len;
    if (converged) break;
  }
  return estimate;
}

SquareMatrix permute(const SquareMatrix& a, std::span<const std::size_t> perm) {
  SquareMatrix out(a.n);
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t j = 0; j < a.n; ++j) out(perm[i], perm[j]) = a(i, j);
  }
  return out;
}

}  // namespace stflow::graph
