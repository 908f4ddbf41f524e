from .dme_cli import main

main()
