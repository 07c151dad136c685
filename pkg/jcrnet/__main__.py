# -*- coding: utf-8 -*-

import sys

from jcrnet.cli import main

sys.exit(main())
