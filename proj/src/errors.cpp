#include "oodreg/errors.hpp"

namespace oodreg {

void throw_shape_error(const std::string& what, std::size_t expected, std::size_t actual) {
  throw ConfigError(what + ": expected " + std::to_string(expected) + ", got " +
                    std::to_string(actual));
}

}  // namespace oodreg
