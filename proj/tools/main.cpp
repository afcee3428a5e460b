// SPDX-License-Identifier: Apache-2.0
#include "segobs/cli.hpp"

int main(int argc, char** argv) { return segobs::command_dispatch(argc, argv); }
