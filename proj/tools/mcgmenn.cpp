#include "mcgmenn/cli.hpp"

int main(int argc, char** argv) { return mcgmenn::run_cli(argc, argv); }
