#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "ldsa/matrix.hpp"

namespace ldsa {

// Every parameter container exposes visit(), enumerating its matrices in a
// fixed order under stable dotted names. Optimizer updates, gradient checks
// and checkpoints all walk parameters through this one interface.
using ParamVisitor = std::function<void(const std::string&, Matrix&)>;
using ConstParamVisitor = std::function<void(const std::string&, const Matrix&)>;

struct NamedParam {
  std::string name;
  Matrix* value;
};

template <class P>
std::vector<NamedParam> collect_params(P& params) {
  std::vector<NamedParam> out;
  params.visit([&out](const std::string& name, Matrix& m) { out.push_back({name, &m}); });
  return out;
}

// Same-shaped container with every entry zeroed; the gradient accumulator
// matching a parameter struct.
template <class P>
P zeros_like(const P& params) {
  P g = params;
  g.visit([](const std::string&, Matrix& m) {
    std::fill(m.data.begin(), m.data.end(), 0.0);
  });
  return g;
}

template <class P>
std::size_t param_count(const P& params) {
  std::size_t n = 0;
  const P& cp = params;
  cp.visit([&n](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

}  // namespace ldsa
