from ksdtest.cli import main

raise SystemExit(main())
