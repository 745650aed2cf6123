#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stflow/ingest.hpp"

namespace stflow::graph {

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Dense row-major N x N matrix.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}

  double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * n, n}; }
};

/// Great-circle distance on a sphere of radius kEarthRadiusKm (haversine form).
double haversine_km(double lat1, double lng1, double lat2, double lng2);

/// Distances in km; filled for i < j and mirrored.
struct DistanceMatrix {
  SquareMatrix d;
};

struct WeightedAdjacency {
  SquareMatrix w;
  double sigma_sq = 0.0;
  double epsilon = 0.0;
};

/// D^-1/2 (W + I) D^-1/2 with D the degree matrix of W + I.
struct PropagationOperator {
  SquareMatrix p;
};

DistanceMatrix distance_matrix(const ingest::StationRegistry& registry);

/// Square of the (population) standard deviation of all off-diagonal
/// distances. Falls back to 1 when there are fewer than two stations or
/// every distance is equal.
double default_sigma_sq(const DistanceMatrix& d);

/// w_ij = exp(-d_ij^2 / sigma_sq) when i != j and the value is >= epsilon.
/// Throws ParameterError unless sigma_sq > 0 and epsilon in [0, 1).
WeightedAdjacency gaussian_adjacency(const DistanceMatrix& d, double sigma_sq, double epsilon);

PropagationOperator normalize(const WeightedAdjacency& w);

/// Largest |eigenvalue| estimate of a symmetric matrix by power iteration.
double spectral_radius(const SquareMatrix& m, int max_iterations = 500, double tolerance = 1e-12);

/// B = P A P^T, i.e. b(perm[i], perm[j]) = a(i, j).
SquareMatrix permute(const SquareMatrix& a, std::span<const std::size_t> perm);

}  // namespace stflow::graph
