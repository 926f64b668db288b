// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include "reduet/version.hpp"

namespace rd {

const char* version() { return "0.1.0"; }

}  // namespace rd
