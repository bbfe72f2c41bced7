"""Dark-channel-prior baseline defogger."""
