#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rlrf::xml {

struct Node {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Node> children;
  std::string text;  // concatenated character data of this element

  const std::string* attribute(std::string_view key) const;
};

// Strict well-formedness parse of a single-root document. Throws RenderError(parse).
Node parse(std::string_view text);

}  // namespace rlrf::xml
