#pragma once

#include <span>
#include <string>
#include <string_view>

#include "mmict/autograd.hpp"

namespace mmict {

std::string sha256_hex(std::string_view bytes);

// SHA-256 over names, shapes and raw values of the given parameters.
std::string parameter_digest(std::span<Parameter* const> params);

}  // namespace mmict
