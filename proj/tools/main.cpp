#include "cpdalign/cli.hpp"

int main(int argc, char** argv) { return cpdalign::run_cli(argc, argv); }
