from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Process-level knobs read from MFC_* environment variables or .env."""

    model_config = SettingsConfigDict(env_prefix="MFC_", env_file=".env", extra="ignore")

    output_root: str = Field("runs", description="Root directory for run folders")
    workers: int = Field(4, ge=1, description="Thread pool size for particle blocks")


def get_settings() -> Settings:
    return Settings()
