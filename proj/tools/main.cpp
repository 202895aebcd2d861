#include "multirfm/cli.hpp"

int main(int argc, char** argv) { return multirfm::run_cli(argc, argv); }
