from tenderbroker.cli import main

raise SystemExit(main())
