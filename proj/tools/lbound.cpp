// SPDX-License-Identifier: Apache-2.0
#include "lbound/cli.hpp"

int main(int argc, char** argv) { return lbound::cli::run(argc, argv); }
