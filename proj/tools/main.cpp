#include "cli.hpp"

int main(int argc, char** argv) { return divnorm::run_cli(argc, argv); }
