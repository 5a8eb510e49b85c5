#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spdgan/graph.hpp"

namespace spdgan {

/// Finite-difference check of reverse-mode gradients in double precision.
/// Leaves are either graph inputs (owned tensors) or parameters (whose
/// gradient arrives in Param::grad).
class GradChecker {
 public:
  using Builder = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

  explicit GradChecker(double step = 1e-6) : h_(step) {}

  void input(std::string name, Tensor4<double> value) { inputs_.push_back({std::move(name), std::move(value)}); }
  void param(Param<double>& p) { params_.push_back(&p); }
  /// Compare at most this many randomly chosen coordinates per leaf (0: all).
  void sample(int coords, std::uint64_t seed) {
    max_coords_ = coords;
    sample_seed_ = seed;
  }

  /// Largest per-leaf relative error ||a - n|| / max(||a||, ||n||, 1e-6).
  double run(const Builder& f);

 private:
  struct InputLeaf {
    std::string name;
    Tensor4<double> value;
  };
  double eval(const Builder& f);

  double h_;
  std::vector<InputLeaf> inputs_;
  std::vector<Param<double>*> params_;
  int max_coords_ = 0;
  std::uint64_t sample_seed_ = 0;
};

struct GradcheckSuite {
  std::string name;
  std::string scope;  // layer | network | loss
  std::function<double(std::uint64_t seed)> run;
};

struct GradcheckResult {
  std::string name;
  std::string scope;
  double max_rel_error = 0;
  int seeds = 0;
  bool passed = false;
};

const std::vector<GradcheckSuite>& gradcheck_registry();

/// Runs every suite of `scope` ("all" for every scope) over seeds
/// 0..seeds-1.
std::vector<GradcheckResult> run_gradcheck(const std::string& scope = "all", int seeds = 5, double tol = 1e-3);

std::string gradcheck_report(const std::vector<GradcheckResult>& results);

/// Test fixture: BiMap with a deliberately wrong weight gradient (the
/// factor 2 and the symmetrisation are dropped). Checking it must fail.
Var<double> bimap_corrupted(Var<double> X, Var<double> W);
GradcheckSuite corrupted_bimap_suite();

}  // namespace spdgan
