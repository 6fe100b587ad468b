#pragma once

#include <iosfwd>
#include <string>

#include "syncmask/model.hpp"

namespace syncmask {

// Text header (magic, config fields, tensor names and shapes, "end"), then the
// student's values followed by the teacher's as raw little-endian doubles in
// declaration order.
void write_checkpoint(std::ostream& out, const DualModel& model);
DualModel read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const DualModel& model);
DualModel load_checkpoint(const std::string& path);

}  // namespace syncmask
