#pragma once

#include <string_view>

namespace prodsearch {

/// Version string captured from `git describe` at configure time.
std::string_view build_version() noexcept;

}  // namespace prodsearch
