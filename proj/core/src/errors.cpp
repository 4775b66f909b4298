#include "flowcut/errors.hpp"

namespace flowcut {

namespace {

std::string join_offenders(const std::string& what, const std::vector<std::string>& offenders) {
  std::string msg = what;
  if (!offenders.empty()) {
    msg += ":";
    for (const auto& o : offenders) {
      msg += " ";
      msg += o;
    }
  }
  return msg;
}

}  // namespace

ExchangeError::ExchangeError(const std::string& what, std::vector<std::string> offenders)
    : Error(join_offenders(what, offenders)), offenders_(std::move(offenders)) {}

}  // namespace flowcut
