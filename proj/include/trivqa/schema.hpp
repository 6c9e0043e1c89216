#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace trivqa {

struct Attribute {
  std::string name;
  std::size_t cardinality = 0;

  bool operator==(const Attribute&) const = default;
};

/// Ordered attribute list; each attribute is its own C-way classification task.
struct AttributeSchema {
  std::vector<Attribute> attributes;

  std::size_t size() const { return attributes.size(); }
  const Attribute& operator[](std::size_t i) const { return attributes.at(i); }
  std::vector<std::size_t> cardinalities() const;

  /// Throws std::invalid_argument on empty schema, duplicate names or C < 2.
  void validate() const;

  bool operator==(const AttributeSchema&) const = default;

  /// Echo, Boundary, Shape, Original, Extrude, Het- with a shared cardinality.
  static AttributeSchema eus_default(std::size_t cardinality = 3);
};

}  // namespace trivqa
