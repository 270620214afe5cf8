# Database helpers
