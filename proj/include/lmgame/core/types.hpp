#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lmgame {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;
using TokenView = std::span<const TokenId>;

}  // namespace lmgame
