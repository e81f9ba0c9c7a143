#include "coadapt/cli.hpp"

int main(int argc, char** argv) { return coadapt::run_cli(argc, argv); }
