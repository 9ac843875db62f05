#include "ensplan/env.hpp"

#include <stdexcept>
#include <string>

#include "ensplan/bytes.hpp"

namespace ensplan {

void check_action(const Model& model, int action) {
  if (action < 0 || action >= model.action_count())
    throw std::out_of_range("action " + std::to_string(action) + " outside [0, " +
                            std::to_string(model.action_count()) + ")");
}

namespace bytes {

std::string to_hex(std::string_view raw) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(raw.size() * 2);
  for (unsigned char c : raw) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xf]);
  }
  return out;
}

}  // namespace bytes
}  // namespace ensplan
