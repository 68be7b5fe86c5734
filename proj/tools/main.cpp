// SPDX-License-Identifier: Apache-2.0
#include "preflab/cli.hpp"

int main(int argc, char** argv) { return preflab::run_cli(argc, argv); }
