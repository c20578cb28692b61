// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#include "tgjar/app/cli.hpp"

int main(int argc, char** argv) { return tgjar::app::cli_main(argc, argv); }
