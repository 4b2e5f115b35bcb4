#include "cli/cli.hpp"

int main(int argc, char** argv) { return wm::cli_main(argc, argv); }
