#pragma once

#include <string_view>

namespace verlab::detail {

extern const std::string_view kTemplateOriginal;
extern const std::string_view kTemplateVeraRag;
extern const std::string_view kTemplateEq6;

}  // namespace verlab::detail
