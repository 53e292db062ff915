#ifndef DIFFLAB_ERRORS_HPP
#define DIFFLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace difflab {

// All precondition violations and unrecoverable numeric failures throw this.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace difflab

#endif  // DIFFLAB_ERRORS_HPP
