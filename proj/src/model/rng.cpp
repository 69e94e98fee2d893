// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace loopscope {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw std::runtime_error("malformed RNG state");
}

}  // namespace loopscope
