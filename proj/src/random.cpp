#include "cyclehair/random.hpp"

#include <sstream>

#include "cyclehair/errors.hpp"

namespace cyclehair {

std::string save_rng(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng load_rng(const std::string& text) {
  std::istringstream in(text);
  Rng rng;
  in >> rng;
  if (in.fail()) throw CheckpointError("corrupt rng state");
  return rng;
}

}  // namespace cyclehair
