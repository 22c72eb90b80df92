#include "shiftrisk/cli.hpp"

int main(int argc, char** argv) { return shiftrisk::cli::run_cli(argc, argv); }
