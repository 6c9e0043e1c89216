#include "trivqa/schema.hpp"

#include <set>
#include <stdexcept>

namespace trivqa {

std::vector<std::size_t> AttributeSchema::cardinalities() const {
  std::vector<std::size_t> out;
  out.reserve(attributes.size());
  for (const auto& a : attributes) out.push_back(a.cardinality);
  return out;
}

void AttributeSchema::validate() const {
  if (attributes.empty()) throw std::invalid_argument("schema: at least one attribute is required");
  std::set<std::string> seen;
  for (const auto& a : attributes) {
    if (a.name.empty()) throw std::invalid_argument("schema: attribute name must be non-empty");
    if (!seen.insert(a.name).second) throw std::invalid_argument("schema: duplicate attribute '" + a.name + "'");
    if (a.cardinality < 2) {
      throw std::invalid_argument("schema: attribute '" + a.name + "' needs cardinality >= 2");
    }
  }
}

AttributeSchema AttributeSchema::eus_default(std::size_t cardinality) {
  AttributeSchema s;
  for (const char* name : {"Echo", "Boundary", "Shape", "Original", "Extrude", "Het-"}) {
    s.attributes.push_back({name, cardinality});
  }
  return s;
}

}  // namespace trivqa
