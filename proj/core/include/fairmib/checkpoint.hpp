// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "fairmib/adam.hpp"

namespace fairmib {

// Parameter bundle on disk: a small JSON header (architecture metadata plus
// name/shape records) followed by the raw float64 payload in header order.
// Readers validate shapes against the header before accepting the payload.
struct Checkpoint {
    std::string meta_json;  // free-form architecture / config snapshot
    ParamStore params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fairmib
